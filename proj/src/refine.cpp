#include "poseseq/refine.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "poseseq/adam.hpp"

namespace poseseq {

using ad::Mat;
using ad::Var;

void LossWeights::validate() const {
  if (limb < 0 || mpjp < 0 || nmpjp < 0 || velocity < 0)
    throw std::invalid_argument("loss weights must be nonnegative");
}

void TTTConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("ttt config: epochs must be >= 0");
  if (learning_rate < 0) throw std::invalid_argument("ttt config: learning rate < 0");
  if (weight_decay < 0) throw std::invalid_argument("ttt config: weight decay < 0");
  if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0))
    throw std::invalid_argument("ttt config: lr decay must lie in (0, 1]");
  if (window < 1) throw std::invalid_argument("ttt config: window must be >= 1");
}

PoseSequence linear_fill(const PoseSequence& noisy) {
  const int T = noisy.frame_count();
  const int J = noisy.joint_count();
  std::vector<int> valid_ids;
  for (int t = 0; t < T; ++t)
    if (noisy.valid[static_cast<std::size_t>(t)]) valid_ids.push_back(t);
  if (valid_ids.empty()) throw std::invalid_argument("linear_fill: zero valid frames");

  PoseSequence out = noisy;
  std::fill(out.valid.begin(), out.valid.end(), 1);
  if (valid_ids.size() == 1) {
    const int v = valid_ids[0];
    for (int t = 0; t < T; ++t)
      if (t != v) out.frame(t) = noisy.frame(v);
    return out;
  }

  auto lerp_frames = [&](int t, int t0, int t1) {
    const double a = static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
    const Eigen::Index b0 = static_cast<Eigen::Index>(t0) * J;
    const Eigen::Index b1 = static_cast<Eigen::Index>(t1) * J;
    out.frames.middleRows(static_cast<Eigen::Index>(t) * J, J) =
        (1.0 - a) * noisy.frames.middleRows(b0, J) + a * noisy.frames.middleRows(b1, J);
  };

  const int first = valid_ids.front(), second = valid_ids[1];
  const int last = valid_ids.back(), penult = valid_ids[valid_ids.size() - 2];
  std::size_t k = 0;  // index of the first valid frame >= t
  for (int t = 0; t < T; ++t) {
    if (noisy.valid[static_cast<std::size_t>(t)]) {
      if (k < valid_ids.size() && valid_ids[k] == t) ++k;
      continue;
    }
    if (t < first) {
      lerp_frames(t, first, second);  // extrapolates, a < 0
    } else if (t > last) {
      lerp_frames(t, penult, last);  // extrapolates, a > 1
    } else {
      lerp_frames(t, valid_ids[k - 1], valid_ids[k]);
    }
  }
  return out;
}

Var loss_limb_node(const Var& pred, const SkeletonTopology& topology, int frame_count) {
  const auto children = topology.limb_children();
  if (children.empty()) throw std::invalid_argument("loss_limb: topology has no limbs");
  const int T = frame_count;
  const int J = topology.joint_count;
  if (T < 2) {
    std::cerr << "warning: loss_limb undefined for T < 2, returning 0\n";
    return ad::constant(0.0);
  }
  const auto L = static_cast<Eigen::Index>(children.size());

  // Limb vectors gathered time-major: row t*L + l.
  std::vector<int> child_rows, parent_rows;
  child_rows.reserve(static_cast<std::size_t>(T) * children.size());
  parent_rows.reserve(child_rows.capacity());
  for (int t = 0; t < T; ++t)
    for (int c : children) {
      child_rows.push_back(t * J + c);
      parent_rows.push_back(t * J + topology.parent_of[c]);
    }
  Var limb_vec = ad::sub(ad::gather_rows(pred, child_rows), ad::gather_rows(pred, parent_rows));
  Var lengths = ad::rownorm(limb_vec);  // (T*L, 1)

  // Normalize by the sequence-mean total skeleton length.
  Var mean_total = ad::scale(ad::sum_all(lengths), 1.0 / static_cast<double>(T));
  if (!(mean_total.scalar() > 0.0))
    throw std::invalid_argument("loss_limb: zero skeleton length, cannot normalize");
  Var norm_lengths = ad::reshape_rowmajor(ad::div_scalar_var(lengths, mean_total), T, L);

  // Population variance over time per limb, averaged with the 1/J prefactor.
  Var col_mean = ad::scale(ad::colsum(norm_lengths), 1.0 / static_cast<double>(T));
  Var centered = ad::sub_rowvec(norm_lengths, col_mean);
  Var sq = ad::cmul(centered, centered);
  return ad::scale(ad::sum_all(sq), 1.0 / (static_cast<double>(T) * static_cast<double>(J)));
}

Var loss_mpjp_node(const Var& pred, const Mat& pseudo) {
  if (pred.rows() != pseudo.rows() || pred.cols() != pseudo.cols())
    throw std::invalid_argument("loss_mpjp: shape mismatch");
  const double n = static_cast<double>(pred.rows()) * static_cast<double>(pred.cols());
  return ad::scale(ad::sum_all(ad::abs_elem(ad::sub(pred, ad::constant(pseudo)))), 1.0 / n);
}

Var scale_factor_node(const Var& pred, const Mat& pseudo) {
  if (pred.rows() != pseudo.rows() || pred.cols() != pseudo.cols())
    throw std::invalid_argument("scale_factor: shape mismatch");
  Var num = ad::sum_all(ad::cmul(ad::constant(pseudo), pred));
  Var den = ad::sum_all(ad::cmul(pred, pred));
  if (den.scalar() == 0.0) throw std::invalid_argument("scale_factor: degenerate prediction");
  return ad::div_scalar_var(num, den);
}

Var loss_nmpjp_node(const Var& pred, const Mat& pseudo) {
  Var s = scale_factor_node(pred, pseudo);
  return loss_mpjp_node(ad::mul_scalar_var(pred, s), pseudo);
}

Var loss_vel_node(const Var& pred, const Mat& pseudo, int frame_count) {
  if (pred.rows() != pseudo.rows() || pred.cols() != pseudo.cols())
    throw std::invalid_argument("loss_vel: shape mismatch");
  if (frame_count < 2) {
    std::cerr << "warning: loss_vel undefined for T < 2, returning 0\n";
    return ad::constant(0.0);
  }
  const Eigen::Index J = pred.rows() / frame_count;
  const Eigen::Index m = pred.rows() - J;
  Var vel_pred = ad::sub(ad::row_block(pred, J, m), ad::row_block(pred, 0, m));
  Mat vel_pseudo = pseudo.bottomRows(m) - pseudo.topRows(m);
  const double n = static_cast<double>(m) * 3.0;
  return ad::scale(
      ad::sum_all(ad::abs_elem(ad::sub(vel_pred, ad::constant(std::move(vel_pseudo))))), 1.0 / n);
}

Var total_loss_node(const Var& pred, const Mat& pseudo, const SkeletonTopology& topology,
                    int frame_count, const LossWeights& w, TotalLoss* components) {
  Var lim = loss_limb_node(pred, topology, frame_count);
  Var mpjp = loss_mpjp_node(pred, pseudo);
  Var nmpjp = loss_nmpjp_node(pred, pseudo);
  Var vel = loss_vel_node(pred, pseudo, frame_count);
  Var total = ad::add(ad::add(ad::scale(lim, w.limb), ad::scale(mpjp, w.mpjp)),
                      ad::add(ad::scale(nmpjp, w.nmpjp), ad::scale(vel, w.velocity)));
  if (components) {
    components->limb = lim.scalar();
    components->mpjp = mpjp.scalar();
    components->nmpjp = nmpjp.scalar();
    components->velocity = vel.scalar();
    components->total = total.scalar();
  }
  return total;
}

double loss_limb(const PoseSequence& pred, const SkeletonTopology& topology) {
  return loss_limb_node(ad::constant(pred.frames), topology, pred.frame_count()).scalar();
}

double loss_mpjp(const PoseSequence& pred, const PoseSequence& pseudo) {
  return loss_mpjp_node(ad::constant(pred.frames), pseudo.frames).scalar();
}

double scale_factor(const PoseSequence& pred, const PoseSequence& pseudo) {
  return scale_factor_node(ad::constant(pred.frames), pseudo.frames).scalar();
}

double loss_nmpjp(const PoseSequence& pred, const PoseSequence& pseudo) {
  return loss_nmpjp_node(ad::constant(pred.frames), pseudo.frames).scalar();
}

double loss_vel(const PoseSequence& pred, const PoseSequence& pseudo) {
  return loss_vel_node(ad::constant(pred.frames), pseudo.frames, pred.frame_count()).scalar();
}

TotalLoss total_loss(const PoseSequence& pred, const PoseSequence& pseudo,
                     const SkeletonTopology& topology, const LossWeights& w) {
  TotalLoss out;
  total_loss_node(ad::constant(pred.frames), pseudo.frames, topology, pred.frame_count(), w,
                  &out);
  return out;
}

namespace {

// Forward the full sequence, windowed when T exceeds the model limit.
Var forward_windowed(const MotionPrior& model, const Mat& coords, int frame_count, int window,
                     const std::map<std::string, Var>& leaves, ad::Tape* tape) {
  const int J = model.joint_count;
  if (frame_count <= model.config.max_frames)
    return model.forward_flat(coords, frame_count, nullptr, leaves, tape);
  const int win = std::min(window, model.config.max_frames);
  std::vector<Var> parts;
  for (int t0 = 0; t0 < frame_count; t0 += win) {
    const int len = std::min(win, frame_count - t0);
    Mat chunk = coords.middleRows(static_cast<Eigen::Index>(t0) * J,
                                  static_cast<Eigen::Index>(len) * J);
    parts.push_back(model.forward_flat(chunk, len, nullptr, leaves, tape));
  }
  return ad::concat_rows(parts);
}

}  // namespace

RefineResult ttt_refine(const PoseSequence& noisy, const MotionPrior& model, const TTTConfig& cfg,
                        const LossWeights& w) {
  cfg.validate();
  w.validate();
  if (noisy.joint_count() != model.joint_count)
    throw std::invalid_argument("ttt_refine: sequence joint count differs from model");

  RefineResult result;
  result.pseudo = linear_fill(noisy);  // computed once, frozen
  result.model = model;                // private clone; the checkpoint stays untouched

  const Mat& pseudo = result.pseudo.frames;
  const int T = result.pseudo.frame_count();

  AdamOptimizer opt;
  opt.weight_decay = cfg.weight_decay;
  double lr = cfg.learning_rate;
  result.history.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape tape;
    auto leaves = result.model.bind_params(tape);
    Var pred = forward_windowed(result.model, pseudo, T, cfg.window, leaves, &tape);
    TotalLoss components;
    Var loss = total_loss_node(pred, pseudo, *noisy.topology, T, w, &components);
    if (!std::isfinite(components.total))
      throw std::runtime_error("ttt_refine: non-finite loss at epoch " + std::to_string(epoch));
    result.history.push_back(components);

    tape.backward(loss);
    std::map<std::string, Mat> grads;
    for (const auto& [name, leaf] : leaves)
      if (tape.has_grad(leaf)) grads.emplace(name, tape.grad(leaf));
    opt.step(result.model.params, grads, lr);
    lr *= cfg.lr_decay_per_epoch;
  }

  Var final_out = forward_windowed(result.model, pseudo, T, cfg.window, {}, nullptr);
  result.refined = result.pseudo;
  result.refined.frames = final_out.val();
  std::fill(result.refined.valid.begin(), result.refined.valid.end(), 1);
  return result;
}

}  // namespace poseseq
