#include <CLI11.hpp>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "poseseq/checkpoint.hpp"
#include "poseseq/metrics.hpp"
#include "poseseq/occlusion.hpp"
#include "poseseq/pretrain.hpp"
#include "poseseq/pseq_io.hpp"
#include "poseseq/refine.hpp"
#include "poseseq/run_config.hpp"

namespace fs = std::filesystem;
using namespace poseseq;

namespace {

// Relative outputs resolve against POSESEQ_OUT_DIR when set.
std::string resolve_out(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  const char* base = std::getenv("POSESEQ_OUT_DIR");
  if (!base || !*base) return path;
  return (fs::path(base) / path).string();
}

std::shared_ptr<const SkeletonTopology> load_topology(const std::string& name_or_path) {
  if (fs::exists(name_or_path))
    return std::make_shared<const SkeletonTopology>(SkeletonTopology::load_file(name_or_path));
  return std::make_shared<const SkeletonTopology>(SkeletonTopology::preset(name_or_path));
}

LossWeights parse_weight_overrides(const std::string& spec, LossWeights w) {
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--weights expects name=value pairs, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const double value = std::stod(item.substr(eq + 1));
    if (name == "lim")
      w.limb = value;
    else if (name == "mpjp")
      w.mpjp = value;
    else if (name == "nmpjp")
      w.nmpjp = value;
    else if (name == "vel")
      w.velocity = value;
    else
      throw CLI::ValidationError("--weights: unknown loss '" + name + "'");
  }
  w.validate();
  return w;
}

void write_refine_history(const std::vector<TotalLoss>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss history: " + path);
  out << "epoch,total,lim,mpjp,nmpjp,vel\n";
  for (std::size_t e = 0; e < history.size(); ++e)
    out << e << ',' << history[e].total << ',' << history[e].limb << ',' << history[e].mpjp << ','
        << history[e].nmpjp << ',' << history[e].velocity << "\n";
}

std::vector<PoseSequence> load_dataset(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& entry : fs::directory_iterator(in))
        if (entry.path().extension() == ".pseq") files.push_back(entry.path().string());
    } else {
      files.push_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .pseq inputs found");
  std::vector<PoseSequence> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_pseq(f));
  return out;
}

void write_svg_plot(const std::string& path, const std::vector<std::array<double, 3>>& err_mm) {
  const double width = 880, height = 360, ml = 60, mr = 20, mt = 20, mb = 40;
  double vmax = 1.0;
  for (const auto& e : err_mm)
    for (double v : e)
      if (std::isfinite(v)) vmax = std::max(vmax, v);
  const double px = (width - ml - mr) / std::max<std::size_t>(1, err_mm.size() - 1);
  const double py = (height - mt - mb) / vmax;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 4
      << "\" text-anchor=\"end\" font-size=\"12\">" << vmax << "</text>\n";
  out << "<text x=\"" << ml - 8 << "\" y=\"" << height - mb
      << "\" text-anchor=\"end\" font-size=\"12\">0</text>\n";
  out << "<text x=\"" << (width / 2) << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">frame</text>\n";
  const char* colors[3] = {"#d62728", "#2ca02c", "#1f77b4"};
  const char* labels[3] = {"x", "y", "z"};
  for (int d = 0; d < 3; ++d) {
    out << "<polyline fill=\"none\" stroke=\"" << colors[d] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < err_mm.size(); ++t) {
      const double v = err_mm[t][static_cast<std::size_t>(d)];
      if (!std::isfinite(v)) continue;
      out << (ml + px * static_cast<double>(t)) << ',' << (height - mb - py * v) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << width - mr - 60 + 20 * d << "\" y=\"" << mt + 12 << "\" fill=\""
        << colors[d] << "\" font-size=\"12\">" << labels[d] << "</text>\n";
  }
  out << "</svg>\n";
}

int run(int argc, char** argv) {
  CLI::App app{"pose-sequence refinement toolkit: pretrain a motion prior on corrupted 3D pose "
               "sequences, then adapt it per video to repair noisy, gappy estimates"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration")->expected(1);
  std::uint64_t cli_seed = 0;
  bool seed_set = false;
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { cli_seed = s; seed_set = true; },
         "global random seed (overrides config)")
      ->expected(1);

  RunConfig cfg;  // defaults; replaced after parse when --config given

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate rigid smooth synthetic motions");
  int synth_count = 16, synth_frames = 48;
  double synth_fps = 25.0;
  std::string synth_out = "synth", synth_topo;
  bool synth_binary = false;
  synth->add_option("--count", synth_count, "number of sequences");
  synth->add_option("--frames", synth_frames, "frames per sequence");
  synth->add_option("--fps", synth_fps, "frames per second");
  synth->add_option("--topology", synth_topo, "topology preset or file");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_flag("--pseq-binary", synth_binary, "write binary frame blocks");

  // ---- occlude ----
  auto* occ = app.add_subcommand("occlude", "apply detection-failure occlusion to a sequence");
  std::string occ_in, occ_out;
  bool occ_binary = false;
  double occ_span = -1, occ_period = -1, occ_coverage = -1, occ_noise = -1, occ_dropout = -1;
  occ->add_option("--in", occ_in, "ground-truth .pseq")->required();
  occ->add_option("--out", occ_out, "output prefix (writes .gt.pseq/.occ.pseq/.spec.txt)")
      ->required();
  occ->add_option("--span-seconds", occ_span, "occlusion span length");
  occ->add_option("--period-seconds", occ_period, "window period");
  occ->add_option("--coverage", occ_coverage, "fraction of joints dropped in a span");
  occ->add_option("--survivor-noise", occ_noise, "noise sigma outside spans (m)");
  occ->add_option("--per-joint-dropout", occ_dropout, "dropout probability outside spans");
  occ->add_flag("--pseq-binary", occ_binary, "write binary frame blocks");

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "train the motion prior on clean sequences");
  std::vector<std::string> pre_data;
  std::string pre_out = "model.mpc";
  int pre_epochs = -1, pre_depth = -1, pre_dim = -1, pre_max_frames = -1;
  double pre_lr = -1;
  pre->add_option("--data", pre_data, "training .pseq files or directories")->required();
  pre->add_option("--out", pre_out, "checkpoint path")->required();
  pre->add_option("--epochs", pre_epochs, "training epochs");
  pre->add_option("--lr", pre_lr, "learning rate");
  pre->add_option("--depth", pre_depth, "model depth");
  pre->add_option("--dim", pre_dim, "model feature/embed dim");
  pre->add_option("--max-frames", pre_max_frames, "model max frames");

  // ---- refine ----
  auto* ref = app.add_subcommand("refine", "test-time adapt a checkpoint to one video");
  std::string ref_model, ref_in, ref_out = "refined.pseq";
  std::string ref_weights;
  int ref_epochs = -1;
  double ref_lr = -1;
  bool ref_binary = false;
  ref->add_option("--model", ref_model, "pretrained checkpoint")->required();
  ref->add_option("--in", ref_in, "noisy .pseq with validity gaps")->required();
  ref->add_option("--out", ref_out, "refined .pseq (history lands at <out>.history.csv)");
  ref->add_option("--epochs", ref_epochs, "adaptation epochs (0 = prior only)");
  ref->add_option("--lr", ref_lr, "adaptation learning rate");
  ref->add_option("--weights", ref_weights, "loss weight overrides, e.g. lim=200,mpjp=1");
  ref->add_flag("--pseq-binary", ref_binary, "write binary frame blocks");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "score a prediction against ground truth");
  std::string ev_pred, ev_gt, ev_csv, ev_report;
  bool ev_root_rel = false, ev_seq_pa = false, ev_accel_sec = false;
  ev->add_option("--pred", ev_pred, "predicted .pseq")->required();
  ev->add_option("--gt", ev_gt, "ground-truth .pseq")->required();
  ev->add_option("--csv", ev_csv, "append a one-line CSV row here");
  ev->add_option("--out", ev_report, "write the text report here (default: stdout only)");
  ev->add_flag("--root-relative", ev_root_rel, "center poses at the root before MPJPE");
  ev->add_flag("--sequence-pa", ev_seq_pa, "sequence-level Procrustes alignment");
  ev->add_flag("--accel-per-second", ev_accel_sec, "report accel per second^2");

  // ---- ablate ----
  auto* ab = app.add_subcommand("ablate", "cumulative loss ablation grid on one video");
  std::string ab_model, ab_in, ab_gt, ab_out = "ablation.csv", ab_weights;
  int ab_epochs = -1;
  ab->add_option("--model", ab_model, "pretrained checkpoint")->required();
  ab->add_option("--in", ab_in, "occluded .pseq")->required();
  ab->add_option("--gt", ab_gt, "ground-truth .pseq")->required();
  ab->add_option("--out", ab_out, "output CSV");
  ab->add_option("--epochs", ab_epochs, "adaptation epochs per row");
  ab->add_option("--weights", ab_weights, "loss weight overrides");

  // ---- plot ----
  auto* pl = app.add_subcommand("plot", "per-coordinate error-vs-frame curves (CSV + SVG)");
  std::string pl_pred, pl_gt, pl_out = "errors";
  pl->add_option("--pred", pl_pred, "predicted .pseq")->required();
  pl->add_option("--gt", pl_gt, "ground-truth .pseq")->required();
  pl->add_option("--out", pl_out, "output prefix (writes <out>.csv and <out>.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  if (!config_path.empty()) cfg = RunConfig::load_file(config_path);
  if (seed_set) cfg.seed = cli_seed;

  if (synth->parsed()) {
    auto topo = load_topology(synth_topo.empty() ? cfg.topology : synth_topo);
    auto motions = generate_synthetic_motion(synth_count, synth_frames, topo, cfg.seed, synth_fps);
    const fs::path dir = resolve_out(synth_out);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < motions.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "synth_%04zu.pseq", i);
      write_pseq(motions[i], (dir / name).string(),
                 synth_binary ? PseqFrames::binary : PseqFrames::text);
    }
    std::cout << "wrote " << motions.size() << " sequences to " << dir.string() << "\n";
    return 0;
  }

  if (occ->parsed()) {
    OcclusionSpec spec = cfg.occlusion;
    if (occ_span >= 0) spec.span_seconds = occ_span;
    if (occ_period >= 0) spec.period_seconds = occ_period;
    if (occ_coverage >= 0) spec.coverage = occ_coverage;
    if (occ_noise >= 0) spec.survivor_noise_sigma = occ_noise;
    if (occ_dropout >= 0) spec.per_joint_dropout = occ_dropout;
    spec.seed = cfg.seed;
    const PoseSequence gt = read_pseq(occ_in);
    const PoseSequence corrupted = occlude(gt, spec);
    const std::string prefix = resolve_out(occ_out);
    const auto fmt = occ_binary ? PseqFrames::binary : PseqFrames::text;
    write_pseq(gt, prefix + ".gt.pseq", fmt);
    write_pseq(corrupted, prefix + ".occ.pseq", fmt);
    std::ofstream echo(prefix + ".spec.txt");
    echo << "span_seconds " << spec.span_seconds << "\nperiod_seconds " << spec.period_seconds
         << "\ncoverage " << spec.coverage << "\nsurvivor_noise_sigma "
         << spec.survivor_noise_sigma << "\nper_joint_dropout " << spec.per_joint_dropout
         << "\nseed " << spec.seed << "\n";
    std::cout << "wrote " << prefix << ".gt.pseq, .occ.pseq, .spec.txt\n";
    return 0;
  }

  if (pre->parsed()) {
    auto dataset = load_dataset(pre_data);
    PretrainConfig pc = cfg.pretrain;
    if (pre_epochs >= 0) pc.epochs = pre_epochs;
    if (pre_lr >= 0) pc.learning_rate = pre_lr;
    pc.seed = cfg.seed;
    MotionPriorConfig mc = cfg.model;
    if (pre_depth > 0) mc.depth = pre_depth;
    if (pre_dim > 0) {
      mc.feature_dim = pre_dim;
      mc.embed_dim = pre_dim;
      while (mc.feature_dim % mc.heads != 0) --mc.heads;
    }
    if (pre_max_frames > 0) mc.max_frames = pre_max_frames;
    MaskSpec mask = cfg.mask;
    NoiseSpec noise = cfg.noise;

    MotionPrior model = MotionPrior::init(mc, dataset.front().joint_count(),
                                          Rng::derive(cfg.seed, 0x11117));
    const std::string out_path = resolve_out(pre_out);
    std::ofstream hist(out_path + ".history.csv");
    hist << "epoch,total,l3d,lvel\n";
    run_pretraining(model, dataset, pc, mask, noise,
                    [&](int epoch, const EpochStats& s, const MotionPrior&) {
                      hist << epoch << ',' << s.total << ',' << s.position << ',' << s.velocity
                           << "\n";
                      std::cerr << "epoch " << epoch << " loss " << s.total << "\n";
                    });
    save_checkpoint(model, out_path);
    std::cout << "wrote checkpoint " << out_path << "\n";
    return 0;
  }

  if (ref->parsed()) {
    const MotionPrior model = load_checkpoint(ref_model);
    const PoseSequence noisy = read_pseq(ref_in);
    TTTConfig tc = cfg.ttt;
    if (ref_epochs >= 0) tc.epochs = ref_epochs;
    if (ref_lr >= 0) tc.learning_rate = ref_lr;
    tc.seed = cfg.seed;
    LossWeights w = cfg.loss_weights;
    if (!ref_weights.empty()) w = parse_weight_overrides(ref_weights, w);

    RefineResult result = ttt_refine(noisy, model, tc, w);
    const std::string out_path = resolve_out(ref_out);
    write_pseq(result.refined, out_path, ref_binary ? PseqFrames::binary : PseqFrames::text);
    write_refine_history(result.history, out_path + ".history.csv");
    std::cout << "wrote " << out_path << "\n";
    return 0;
  }

  if (ev->parsed()) {
    const PoseSequence pred = read_pseq(ev_pred);
    const PoseSequence gt = read_pseq(ev_gt);
    MetricOptions opt;
    opt.root_relative = ev_root_rel;
    opt.sequence_level_pa = ev_seq_pa;
    opt.accel_per_second = ev_accel_sec;
    const EvalReport report = evaluate(pred, gt, opt);
    std::cout << report.to_text();
    if (!ev_report.empty()) {
      std::ofstream out(resolve_out(ev_report));
      out << report.to_text();
    }
    if (!ev_csv.empty()) {
      const std::string path = resolve_out(ev_csv);
      const bool fresh = !fs::exists(path);
      std::ofstream out(path, std::ios::app);
      if (fresh) out << EvalReport::csv_header() << "\n";
      out << report.to_csv_row() << "\n";
    }
    return 0;
  }

  if (ab->parsed()) {
    const MotionPrior model = load_checkpoint(ab_model);
    const PoseSequence noisy = read_pseq(ab_in);
    const PoseSequence gt = read_pseq(ab_gt);
    TTTConfig tc = cfg.ttt;
    if (ab_epochs >= 0) tc.epochs = ab_epochs;
    tc.seed = cfg.seed;
    LossWeights base = cfg.loss_weights;
    if (!ab_weights.empty()) base = parse_weight_overrides(ab_weights, base);

    struct Row {
      const char* label;
      bool mpjp, vel, lim, nmpjp;
    };
    // Cumulative enablement in the printed table order.
    const Row rows[] = {{"prior_only", false, false, false, false},
                        {"+mpjp", true, false, false, false},
                        {"+vel", true, true, false, false},
                        {"+lim", true, true, true, false},
                        {"+nmpjp", true, true, true, true}};
    std::ofstream out(resolve_out(ab_out));
    out << "row,mpjpe_mm,pa_mpjpe_mm,accel_mm\n";
    for (const auto& row : rows) {
      TTTConfig row_cfg = tc;
      LossWeights w;
      w.mpjp = row.mpjp ? base.mpjp : 0.0;
      w.velocity = row.vel ? base.velocity : 0.0;
      w.limb = row.lim ? base.limb : 0.0;
      w.nmpjp = row.nmpjp ? base.nmpjp : 0.0;
      if (!row.mpjp && !row.vel && !row.lim && !row.nmpjp) row_cfg.epochs = 0;
      RefineResult r = ttt_refine(noisy, model, row_cfg, w);
      out << row.label << ',' << mpjpe(r.refined, gt) << ',' << pa_mpjpe(r.refined, gt) << ','
          << accel_error(r.refined, gt) << "\n";
      std::cerr << "ablation row " << row.label << " done\n";
    }
    std::cout << "wrote " << resolve_out(ab_out) << "\n";
    return 0;
  }

  if (pl->parsed()) {
    const PoseSequence pred = read_pseq(pl_pred);
    const PoseSequence gt = read_pseq(pl_gt);
    if (pred.frame_count() != gt.frame_count() || pred.joint_count() != gt.joint_count())
      throw std::runtime_error("plot: pred and gt shapes differ");
    const int T = gt.frame_count();
    const int J = gt.joint_count();
    std::vector<std::array<double, 3>> err(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      if (!gt.valid[static_cast<std::size_t>(t)]) {
        err[static_cast<std::size_t>(t)] = {std::nan(""), std::nan(""), std::nan("")};
        continue;
      }
      for (int d = 0; d < 3; ++d) {
        double s = 0;
        for (int j = 0; j < J; ++j) s += std::abs(pred.joint(t, j)(d) - gt.joint(t, j)(d));
        err[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)] =
            1000.0 * s / static_cast<double>(J);
      }
    }
    const std::string prefix = resolve_out(pl_out);
    std::ofstream csv(prefix + ".csv");
    csv << "frame,ex_mm,ey_mm,ez_mm\n";
    for (int t = 0; t < T; ++t)
      csv << t << ',' << err[static_cast<std::size_t>(t)][0] << ','
          << err[static_cast<std::size_t>(t)][1] << ',' << err[static_cast<std::size_t>(t)][2]
          << "\n";
    write_svg_plot(prefix + ".svg", err);
    std::cout << "wrote " << prefix << ".csv and " << prefix << ".svg\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;  // usage error
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;  // runtime error
  }
}
