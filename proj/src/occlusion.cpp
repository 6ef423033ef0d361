#include "poseseq/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "poseseq/refine.hpp"
#include "poseseq/rng.hpp"

namespace poseseq {

void OcclusionSpec::validate() const {
  if (span_seconds < 0.0 || period_seconds <= 0.0)
    throw std::invalid_argument("occlusion spec: nonpositive period or negative span");
  if (span_seconds > period_seconds)
    throw std::invalid_argument("occlusion spec: span must not exceed the period");
  if (coverage < 0.0 || coverage > 1.0)
    throw std::invalid_argument("occlusion spec: coverage must lie in [0, 1]");
  if (survivor_noise_sigma < 0.0)
    throw std::invalid_argument("occlusion spec: negative noise sigma");
  if (per_joint_dropout < 0.0 || per_joint_dropout > 1.0)
    throw std::invalid_argument("occlusion spec: per_joint_dropout must lie in [0, 1]");
}

PoseSequence occlude(const PoseSequence& gt, const OcclusionSpec& spec) {
  spec.validate();
  if (!(gt.fps > 0.0)) throw std::invalid_argument("occlude: sequence is missing fps");
  if (!gt.fully_valid()) throw std::invalid_argument("occlude: ground truth must be fully valid");

  const int T = gt.frame_count();
  const int J = gt.joint_count();
  const int span = static_cast<int>(std::lround(spec.span_seconds * gt.fps));
  const int period = std::max(1, static_cast<int>(std::lround(spec.period_seconds * gt.fps)));
  if (span > T) throw std::invalid_argument("occlude: span longer than the sequence");

  Rng rng(spec.seed);

  // One span per full (or span-sized) window, uniform offset.
  std::vector<std::uint8_t> in_span(static_cast<std::size_t>(T), 0);
  if (span > 0) {
    for (int w0 = 0; w0 < T; w0 += period) {
      const int wlen = std::min(period, T - w0);
      if (span > wlen) continue;  // truncated trailing window too short
      const int off = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(wlen - span + 1)));
      for (int t = w0 + off; t < w0 + off + span; ++t) in_span[static_cast<std::size_t>(t)] = 1;
    }
  }

  PoseSequence out = gt;
  const int drop_per_frame = static_cast<int>(std::lround(spec.coverage * J));

  // Per-joint hold values follow the corrupted output stream; a joint dropped
  // before any emission holds its frame-0 ground truth.
  Eigen::MatrixXd hold = gt.frames.topRows(J);

  std::vector<int> joint_ids(static_cast<std::size_t>(J));
  for (int t = 0; t < T; ++t) {
    const Eigen::Index base = static_cast<Eigen::Index>(t) * J;
    if (in_span[static_cast<std::size_t>(t)]) {
      if (drop_per_frame >= J) {
        out.valid[static_cast<std::size_t>(t)] = 0;
        out.frames.middleRows(base, J).setZero();
        continue;
      }
      std::iota(joint_ids.begin(), joint_ids.end(), 0);
      rng.shuffle(joint_ids);
      std::vector<std::uint8_t> dropped(static_cast<std::size_t>(J), 0);
      for (int i = 0; i < drop_per_frame; ++i)
        dropped[static_cast<std::size_t>(joint_ids[static_cast<std::size_t>(i)])] = 1;
      for (int j = 0; j < J; ++j) {
        if (dropped[static_cast<std::size_t>(j)])
          out.frames.row(base + j) = hold.row(j);
        else
          hold.row(j) = out.frames.row(base + j);
      }
      continue;
    }
    // Survivor frame: dropout first, then noise on the kept joints.
    for (int j = 0; j < J; ++j) {
      const bool drop = spec.per_joint_dropout > 0.0 && rng.bernoulli(spec.per_joint_dropout);
      if (drop) {
        out.frames.row(base + j) = hold.row(j);
        continue;
      }
      if (spec.survivor_noise_sigma > 0.0)
        for (int d = 0; d < 3; ++d)
          out.frames(base + j, d) += rng.normal(spec.survivor_noise_sigma);
      hold.row(j) = out.frames.row(base + j);
    }
  }
  return out;
}

PoseSequence baseline_interpolate(const PoseSequence& corrupted) {
  return linear_fill(corrupted);
}

}  // namespace poseseq
