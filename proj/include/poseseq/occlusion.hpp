#pragma once

#include <cstdint>

#include "poseseq/pose_sequence.hpp"

namespace poseseq {

// Detection-failure simulation: one contiguous occlusion span per period
// window, plus optional corruption of the surviving frames.
struct OcclusionSpec {
  double span_seconds = 1.6;
  double period_seconds = 3.2;
  double coverage = 1.0;               // fraction of joints dropped inside a span
  double survivor_noise_sigma = 0.0;   // meters, applied outside spans
  double per_joint_dropout = 0.0;      // probability per (frame, joint) outside spans
  std::uint64_t seed = 0;
  void validate() const;
};

// Partitions the timeline into period windows and erases one span per window
// at a uniformly random offset. Full coverage invalidates the span's frames
// (coordinates zeroed); partial coverage holds dropped joints at their last
// emitted value and keeps the frame valid. Outside spans survivors receive
// Gaussian noise and per-joint dropout. Deterministic given spec.seed; the
// input is never modified.
PoseSequence occlude(const PoseSequence& gt, const OcclusionSpec& spec);

// The linear interpolation/extrapolation baseline, exposed for reporting.
PoseSequence baseline_interpolate(const PoseSequence& corrupted);

}  // namespace poseseq
