#include "poseseq/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "poseseq/kinematics.hpp"

namespace poseseq {

using ad::Mat;
using ad::Var;

void MaskSpec::validate() const {
  if (frame_mask_ratio < 0.0 || frame_mask_ratio > 1.0 || joint_mask_ratio < 0.0 ||
      joint_mask_ratio > 1.0)
    throw std::invalid_argument("mask spec: ratios must lie in [0, 1]");
  if (frame_mask_ratio + joint_mask_ratio > 1.0)
    throw std::invalid_argument("mask spec: frame and joint ratios must sum to at most 1");
}

void NoiseSpec::validate() const {
  if (keyframes < 2) throw std::invalid_argument("noise spec: keyframes must be >= 2");
  if (residual_sigma < 0.0 || keyframe_sigma < 0.0)
    throw std::invalid_argument("noise spec: sigmas must be nonnegative");
}

void PretrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("pretrain config: epochs must be >= 0");
  if (learning_rate < 0.0) throw std::invalid_argument("pretrain config: learning rate < 0");
  if (batch_size < 1) throw std::invalid_argument("pretrain config: batch_size must be >= 1");
  if (velocity_weight < 0.0) throw std::invalid_argument("pretrain config: velocity_weight < 0");
  if (sequence_length < 1) throw std::invalid_argument("pretrain config: sequence_length < 1");
}

Mat sample_smooth_noise(int frame_count, int joint_count, const NoiseSpec& spec) {
  spec.validate();
  if (frame_count < 2) throw std::invalid_argument("smooth noise: at least 2 frames required");
  if (spec.keyframes > frame_count)
    throw std::invalid_argument("smooth noise: more keyframes than frames");
  const int T = frame_count, J = joint_count, K = spec.keyframes;
  Rng rng(spec.seed);

  // Keyframe draws, (K, J*3) laid out joint-major then coordinate.
  Mat key(K, static_cast<Eigen::Index>(J) * 3);
  for (Eigen::Index k = 0; k < key.rows(); ++k)
    for (Eigen::Index c = 0; c < key.cols(); ++c) key(k, c) = rng.normal(spec.keyframe_sigma);

  Mat out(static_cast<Eigen::Index>(T) * J, 3);
  for (int t = 0; t < T; ++t) {
    const double pos = static_cast<double>(t) * (K - 1) / static_cast<double>(T - 1);
    int k0 = static_cast<int>(std::floor(pos));
    if (k0 >= K - 1) k0 = K - 2;
    const double a = pos - k0;
    for (int j = 0; j < J; ++j)
      for (int d = 0; d < 3; ++d) {
        const Eigen::Index col = static_cast<Eigen::Index>(j) * 3 + d;
        out(static_cast<Eigen::Index>(t) * J + j, d) =
            (1.0 - a) * key(k0, col) + a * key(k0 + 1, col);
      }
  }
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (int d = 0; d < 3; ++d) out(r, d) += rng.normal(spec.residual_sigma);
  return out;
}

std::pair<PoseSequence, MaskMap> mask_sequence(const PoseSequence& clean, const MaskSpec& mask,
                                               const NoiseSpec& noise) {
  mask.validate();
  if (!clean.fully_valid())
    throw std::invalid_argument("mask_sequence: input must be fully valid");
  const int T = clean.frame_count();
  const int J = clean.joint_count();

  const int n_frames = static_cast<int>(std::floor(mask.frame_mask_ratio * T));
  const auto n_cells = static_cast<long>(std::llround(mask.joint_mask_ratio * T * J));

  Rng rng(mask.seed);
  std::vector<int> frame_ids(static_cast<std::size_t>(T));
  std::iota(frame_ids.begin(), frame_ids.end(), 0);
  rng.shuffle(frame_ids);
  std::vector<std::uint8_t> frame_masked(static_cast<std::size_t>(T), 0);
  for (int i = 0; i < n_frames; ++i) frame_masked[static_cast<std::size_t>(frame_ids[i])] = 1;

  // Joint-level cells are drawn from positions not already covered by a
  // frame mask.
  std::vector<int> open_cells;
  open_cells.reserve(static_cast<std::size_t>(T) * J);
  for (int t = 0; t < T; ++t) {
    if (frame_masked[static_cast<std::size_t>(t)]) continue;
    for (int j = 0; j < J; ++j) open_cells.push_back(t * J + j);
  }
  if (n_cells > static_cast<long>(open_cells.size()))
    throw std::invalid_argument("mask_sequence: requested joint masks exceed available cells");
  rng.shuffle(open_cells);

  MaskMap map(static_cast<std::size_t>(T) * J, 0);
  for (int t = 0; t < T; ++t)
    if (frame_masked[static_cast<std::size_t>(t)])
      for (int j = 0; j < J; ++j) map[static_cast<std::size_t>(t) * J + j] = 1;
  for (long i = 0; i < n_cells; ++i) map[static_cast<std::size_t>(open_cells[i])] = 1;

  PoseSequence out = clean;
  const bool any_noise = noise.keyframe_sigma > 0.0 || noise.residual_sigma > 0.0;
  const Mat z = any_noise ? sample_smooth_noise(T, J, noise) : Mat();
  for (Eigen::Index r = 0; r < out.frames.rows(); ++r) {
    if (map[static_cast<std::size_t>(r)])
      out.frames.row(r).setZero();
    else if (any_noise)
      out.frames.row(r) += z.row(r);
  }
  return {std::move(out), std::move(map)};
}

Var pretrain_loss_node(const Var& pred, const Mat& target, int frame_count,
                       double velocity_weight, Var* position_out, Var* velocity_out) {
  const Eigen::Index n = pred.rows();
  Var diff = ad::sub(pred, ad::constant(target));
  Var l3d = ad::scale(ad::sum_all(ad::rownorm(diff)), 1.0 / static_cast<double>(n));
  if (position_out) *position_out = l3d;
  if (frame_count < 2) {
    if (velocity_out) *velocity_out = ad::constant(0.0);
    return l3d;
  }
  const Eigen::Index J = n / frame_count;
  const Eigen::Index m = n - J;
  Var vel_pred = ad::sub(ad::row_block(pred, J, m), ad::row_block(pred, 0, m));
  Mat vel_target = target.bottomRows(m) - target.topRows(m);
  Var vdiff = ad::sub(vel_pred, ad::constant(std::move(vel_target)));
  Var lvel = ad::scale(ad::sum_all(ad::rownorm(vdiff)), 1.0 / static_cast<double>(m));
  if (velocity_out) *velocity_out = lvel;
  return ad::add(l3d, ad::scale(lvel, velocity_weight));
}

PretrainLoss pretrain_loss(const PoseSequence& pred, const PoseSequence& target,
                           double velocity_weight) {
  if (pred.frames.rows() != target.frames.rows() || pred.frame_count() != target.frame_count())
    throw std::invalid_argument("pretrain_loss: shape mismatch");
  Var pos, vel;
  Var total = pretrain_loss_node(ad::constant(pred.frames), target.frames, pred.frame_count(),
                                 velocity_weight, &pos, &vel);
  PretrainLoss out;
  out.total = total.scalar();
  out.position = pos.scalar();
  out.velocity = vel.scalar();
  out.velocity_defined = pred.frame_count() >= 2;
  return out;
}

namespace {

Eigen::RowVector3d random_unit(Rng& rng) {
  // Rejection sample inside the unit ball, then normalize.
  while (true) {
    Eigen::RowVector3d v(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const double n = v.norm();
    if (n > 1e-3 && n <= 1.0) return v / n;
  }
}

}  // namespace

std::vector<PoseSequence> generate_synthetic_motion(int count, int frame_count,
                                                    std::shared_ptr<const SkeletonTopology> topo,
                                                    std::uint64_t seed, double fps) {
  topo->validate();
  if (count < 0 || frame_count < 1)
    throw std::invalid_argument("synthetic motion: count and frame_count must be positive");
  const int T = frame_count;
  const int J = topo->joint_count;
  const auto children = topo->limb_children();

  std::vector<PoseSequence> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(s)));
    PoseSequence seq = make_sequence(T, topo, fps);

    // Root travel: one sinusoid per coordinate, periods near 1.6-2.6 s so a
    // fraction-of-a-second gap sits on visible curvature.
    Eigen::Vector3d amp, omega, phase;
    for (int d = 0; d < 3; ++d) {
      amp(d) = rng.uniform(0.1, 0.4);
      omega(d) = 2.0 * M_PI / rng.uniform(1.6, 2.6);
      phase(d) = rng.uniform(0.0, 2.0 * M_PI);
    }

    // Per-limb rigid length and keyframed unit directions in a cone around a
    // base direction; cosine-eased interpolation keeps motion smooth and the
    // final normalization keeps lengths exact.
    const int n_keys = std::max(2, T / 16);
    std::vector<double> limb_len(children.size());
    std::vector<std::vector<Eigen::RowVector3d>> key_dirs(children.size());
    for (std::size_t l = 0; l < children.size(); ++l) {
      limb_len[l] = rng.uniform(0.2, 0.5);
      const Eigen::RowVector3d base = random_unit(rng);
      key_dirs[l].resize(static_cast<std::size_t>(n_keys));
      for (int k = 0; k < n_keys; ++k) {
        Eigen::RowVector3d d = base + 0.35 * random_unit(rng);
        key_dirs[l][static_cast<std::size_t>(k)] = d / d.norm();
      }
    }

    const int root = topo->root();
    // Children sorted ascending and parents always precede in tree walks
    // cannot be assumed; iterate limbs until all joints resolve.
    std::vector<int> order;
    {
      std::vector<std::uint8_t> placed(static_cast<std::size_t>(J), 0);
      placed[static_cast<std::size_t>(root)] = 1;
      bool progress = true;
      while (order.size() < children.size() && progress) {
        progress = false;
        for (int c : children) {
          if (placed[static_cast<std::size_t>(c)]) continue;
          if (placed[static_cast<std::size_t>(topo->parent_of[c])]) {
            order.push_back(c);
            placed[static_cast<std::size_t>(c)] = 1;
            progress = true;
          }
        }
      }
    }
    std::vector<std::size_t> limb_index(static_cast<std::size_t>(J), 0);
    for (std::size_t l = 0; l < children.size(); ++l)
      limb_index[static_cast<std::size_t>(children[l])] = l;

    const double key_step = static_cast<double>(T - 1) / static_cast<double>(n_keys - 1);
    for (int t = 0; t < T; ++t) {
      const double time = static_cast<double>(t) / fps;
      Eigen::RowVector3d r;
      for (int d = 0; d < 3; ++d) r(d) = amp(d) * std::sin(omega(d) * time + phase(d));
      seq.set_joint(t, root, r);

      double pos = n_keys > 1 ? static_cast<double>(t) / key_step : 0.0;
      int k0 = static_cast<int>(std::floor(pos));
      if (k0 >= n_keys - 1) k0 = n_keys - 2;
      const double a_lin = pos - k0;
      const double a = 0.5 * (1.0 - std::cos(M_PI * a_lin));  // cosine ease

      for (int c : order) {
        const std::size_t l = limb_index[static_cast<std::size_t>(c)];
        Eigen::RowVector3d dir = (1.0 - a) * key_dirs[l][static_cast<std::size_t>(k0)] +
                                 a * key_dirs[l][static_cast<std::size_t>(k0 + 1)];
        dir /= dir.norm();
        seq.set_joint(t, c, seq.joint(t, topo->parent_of[c]) + limb_len[l] * dir);
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<EpochStats> run_pretraining(
    MotionPrior& model, const std::vector<PoseSequence>& dataset, const PretrainConfig& cfg,
    const MaskSpec& mask, const NoiseSpec& noise,
    const std::function<void(int, const EpochStats&, const MotionPrior&)>& on_epoch) {
  cfg.validate();
  mask.validate();
  if (dataset.empty()) throw std::invalid_argument("pretraining: empty dataset");
  for (const auto& s : dataset) {
    // sequences beyond sequence_length are randomly cropped per epoch
    if (std::min(s.frame_count(), cfg.sequence_length) > model.config.max_frames)
      throw std::invalid_argument("pretraining: training clip longer than model max_frames");
    if (s.joint_count() != model.joint_count)
      throw std::invalid_argument("pretraining: sequence joint count differs from model");
  }

  AdamOptimizer opt;
  Rng epoch_rng(Rng::derive(cfg.seed, 0xE90C5ULL));
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    epoch_rng.shuffle(order);

    EpochStats stats;
    std::map<std::string, Mat> grad_acc;
    int in_batch = 0;
    auto flush = [&](int batch_count) {
      if (batch_count == 0) return;
      for (auto& [name, g] : grad_acc) g /= static_cast<double>(batch_count);
      opt.step(model.params, grad_acc, cfg.learning_rate);
      grad_acc.clear();
    };

    const bool can_flip =
        cfg.flip_augment && !dataset.front().topology->left_right_pairs.empty();
    for (std::size_t i = 0; i < order.size(); ++i) {
      const PoseSequence* item = &dataset[static_cast<std::size_t>(order[i])];
      PoseSequence clip;
      if (item->frame_count() > cfg.sequence_length) {
        const int t0 = static_cast<int>(epoch_rng.uniform_int(
            static_cast<std::uint64_t>(item->frame_count() - cfg.sequence_length) + 1));
        clip = *item;
        clip.frames = item->frames.middleRows(
            static_cast<Eigen::Index>(t0) * item->joint_count(),
            static_cast<Eigen::Index>(cfg.sequence_length) * item->joint_count());
        clip.valid.assign(item->valid.begin() + t0,
                          item->valid.begin() + t0 + cfg.sequence_length);
        item = &clip;
      }
      PoseSequence flipped;
      if (can_flip && epoch_rng.bernoulli(0.5)) {
        flipped = horizontal_flip(*item);
        item = &flipped;
      }
      MaskSpec item_mask = mask;
      NoiseSpec item_noise = noise;
      item_mask.seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch) + 1,
                                   static_cast<std::uint64_t>(order[i]) * 2);
      item_noise.seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch) + 1,
                                    static_cast<std::uint64_t>(order[i]) * 2 + 1);
      auto [corrupted, mask_map] = mask_sequence(*item, item_mask, item_noise);

      ad::Tape tape;
      auto leaves = model.bind_params(tape);
      Rng drop_rng(Rng::derive(cfg.seed, 0xD0ULL, static_cast<std::uint64_t>(epoch) *
                                                      dataset.size() + i));
      Var pred = model.forward_flat(corrupted.frames, corrupted.frame_count(), &mask_map, leaves,
                                    &tape, nullptr, model.config.dropout > 0 ? &drop_rng : nullptr);
      Var pos, vel;
      Var loss = pretrain_loss_node(pred, item->frames, item->frame_count(), cfg.velocity_weight,
                                    &pos, &vel);
      tape.backward(loss);
      for (const auto& [name, leaf] : leaves) {
        if (!tape.has_grad(leaf)) continue;
        auto it = grad_acc.find(name);
        if (it == grad_acc.end())
          grad_acc.emplace(name, tape.grad(leaf));
        else
          it->second += tape.grad(leaf);
      }
      stats.total += loss.scalar();
      stats.position += pos.scalar();
      stats.velocity += vel.scalar();
      if (++in_batch == cfg.batch_size) {
        flush(in_batch);
        in_batch = 0;
      }
    }
    flush(in_batch);

    const auto n = static_cast<double>(dataset.size());
    stats.total /= n;
    stats.position /= n;
    stats.velocity /= n;
    history.push_back(stats);
    if (on_epoch) on_epoch(epoch, stats, model);
  }
  return history;
}

}  // namespace poseseq
