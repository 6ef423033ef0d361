#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "poseseq/adam.hpp"
#include "poseseq/autodiff.hpp"
#include "poseseq/model.hpp"
#include "poseseq/pose_sequence.hpp"

namespace poseseq {

// Frame- and joint-level masking ratios (fractions of T and of T*J cells).
struct MaskSpec {
  double frame_mask_ratio = 0.10;
  double joint_mask_ratio = 0.05;
  std::uint64_t seed = 0;
  void validate() const;  // ratios in [0,1], sum <= 1
};

// Keyframe-smoothed Gaussian corruption: noise drawn at `keyframes` evenly
// spaced times (std keyframe_sigma), linearly upsampled to T, plus a small
// i.i.d. residual (std residual_sigma).
struct NoiseSpec {
  int keyframes = 27;
  double residual_sigma = 0.002;  // meters
  double keyframe_sigma = 0.05;   // meters
  std::uint64_t seed = 0;
  void validate() const;
};

struct PretrainConfig {
  int epochs = 90;
  double learning_rate = 0.0005;
  int batch_size = 64;
  double velocity_weight = 20.0;  // weight on the velocity term
  int sequence_length = 243;
  bool flip_augment = true;
  std::uint64_t seed = 0;
  void validate() const;
};

// Smooth noise tensor as a (T*J, 3) matrix (row t*J + j). Deterministic
// given spec.seed. Throws for T < 2 or keyframes out of range.
ad::Mat sample_smooth_noise(int frame_count, int joint_count, const NoiseSpec& spec);

// Masks floor(frame_mask_ratio*T) whole frames plus round(joint_mask_ratio*T*J)
// individual cells among the remainder; masked cells are zeroed and flagged,
// all unmasked cells receive additive smooth noise. The input is not modified.
std::pair<PoseSequence, MaskMap> mask_sequence(const PoseSequence& clean, const MaskSpec& mask,
                                               const NoiseSpec& noise);

struct PretrainLoss {
  double total = 0.0;
  double position = 0.0;  // mean per-joint Euclidean reconstruction distance
  double velocity = 0.0;  // mean per-joint Euclidean distance of frame deltas
  bool velocity_defined = true;
};

// total = position + velocity_weight * velocity. For T < 2 the velocity term
// is 0 and flagged undefined.
PretrainLoss pretrain_loss(const PoseSequence& pred, const PoseSequence& target,
                           double velocity_weight);

// Tape-building version over flat (T*J, 3) predictions; single source of
// truth for the value and the gradient path.
ad::Var pretrain_loss_node(const ad::Var& pred, const ad::Mat& target, int frame_count,
                           double velocity_weight, ad::Var* position_out = nullptr,
                           ad::Var* velocity_out = nullptr);

// Rigid, C0-smooth random motions: constant limb lengths by construction,
// cone-constrained keyframe limb directions with cosine-eased interpolation,
// sinusoidal root travel. Deterministic given seed.
std::vector<PoseSequence> generate_synthetic_motion(int count, int frame_count,
                                                    std::shared_ptr<const SkeletonTopology> topo,
                                                    std::uint64_t seed, double fps = 25.0);

struct EpochStats {
  double total = 0.0;
  double position = 0.0;
  double velocity = 0.0;
};

// Denoising pretraining: per epoch shuffles, optionally flips (p=0.5),
// corrupts via mask_sequence with per-item derived seeds, and optimizes
// pretrain_loss with Adam at cfg.learning_rate. Returns per-epoch mean
// losses; the callback (if set) observes each finished epoch.
std::vector<EpochStats> run_pretraining(
    MotionPrior& model, const std::vector<PoseSequence>& dataset, const PretrainConfig& cfg,
    const MaskSpec& mask, const NoiseSpec& noise,
    const std::function<void(int, const EpochStats&, const MotionPrior&)>& on_epoch = nullptr);

}  // namespace poseseq
