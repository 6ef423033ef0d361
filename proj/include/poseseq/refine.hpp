#pragma once

#include <cstdint>
#include <vector>

#include "poseseq/autodiff.hpp"
#include "poseseq/model.hpp"
#include "poseseq/pose_sequence.hpp"

namespace poseseq {

// Weights of the four per-video losses, named by loss to keep the mapping
// unambiguous.
struct LossWeights {
  double limb = 200.0;
  double mpjp = 1.0;
  double nmpjp = 0.5;
  double velocity = 20.0;
  void validate() const;  // all nonnegative
};

// Per-video adaptation schedule. epochs == 0 runs prior-only inference.
struct TTTConfig {
  int epochs = 30;
  double learning_rate = 0.0002;
  double weight_decay = 0.01;
  double lr_decay_per_epoch = 0.99;
  int window = 243;  // forward window for sequences longer than max_frames
  std::uint64_t seed = 0;
  void validate() const;
};

// Fills invalid frames by per-coordinate linear interpolation between the
// nearest valid neighbors; leading/trailing gaps extrapolate from the two
// nearest valid frames (hold-constant when only one exists). Valid frames
// pass through bitwise. Throws when no frame is valid.
PoseSequence linear_fill(const PoseSequence& noisy);

// Mean over limbs of the temporal population variance of normalized limb
// lengths, scaled by 1/J. Zero (with a warning) for T < 2.
double loss_limb(const PoseSequence& pred, const SkeletonTopology& topology);

// Mean absolute per-coordinate deviation over all T*J*3 cells.
double loss_mpjp(const PoseSequence& pred, const PoseSequence& pseudo);

// Least-squares scale aligning pred to pseudo:
// sum(pseudo.*pred) / sum(pred.^2). Throws on an all-zero prediction.
double scale_factor(const PoseSequence& pred, const PoseSequence& pseudo);

// loss_mpjp(scale_factor(pred, pseudo) * pred, pseudo).
double loss_nmpjp(const PoseSequence& pred, const PoseSequence& pseudo);

// Mean absolute per-coordinate deviation of frame-to-frame velocities over
// the (T-1)*J*3 summed cells. Zero (with a warning) for T < 2.
double loss_vel(const PoseSequence& pred, const PoseSequence& pseudo);

struct TotalLoss {
  double total = 0.0;
  double limb = 0.0;
  double mpjp = 0.0;
  double nmpjp = 0.0;
  double velocity = 0.0;
};

TotalLoss total_loss(const PoseSequence& pred, const PoseSequence& pseudo,
                     const SkeletonTopology& topology, const LossWeights& w);

// Tape-building loss graph over flat (T*J, 3) coordinates; the plain
// functions above evaluate these same graphs without a tape.
ad::Var loss_limb_node(const ad::Var& pred, const SkeletonTopology& topology, int frame_count);
ad::Var loss_mpjp_node(const ad::Var& pred, const ad::Mat& pseudo);
ad::Var scale_factor_node(const ad::Var& pred, const ad::Mat& pseudo);
ad::Var loss_nmpjp_node(const ad::Var& pred, const ad::Mat& pseudo);
ad::Var loss_vel_node(const ad::Var& pred, const ad::Mat& pseudo, int frame_count);
ad::Var total_loss_node(const ad::Var& pred, const ad::Mat& pseudo,
                        const SkeletonTopology& topology, int frame_count, const LossWeights& w,
                        TotalLoss* components = nullptr);

struct RefineResult {
  PoseSequence refined;
  PoseSequence pseudo;  // the frozen linear-fill pseudo-labels
  MotionPrior model;    // the adapted per-video clone
  std::vector<TotalLoss> history;
};

// Per-video test-time training: freezes linear-fill pseudo-labels, clones the
// pretrained model (the input model is never mutated), and for cfg.epochs
// steps optimizes total_loss with Adam + decoupled weight decay, decaying the
// learning rate per epoch. Sequences longer than the model's max_frames are
// forwarded in non-overlapping windows of cfg.window frames.
RefineResult ttt_refine(const PoseSequence& noisy, const MotionPrior& model,
                        const TTTConfig& cfg, const LossWeights& w);

}  // namespace poseseq
