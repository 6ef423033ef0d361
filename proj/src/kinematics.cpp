#include "poseseq/kinematics.hpp"

#include <stdexcept>

namespace poseseq {

LimbLengthMatrix limb_lengths(const PoseSequence& seq, bool normalize) {
  const auto& topo = *seq.topology;
  const auto children = topo.limb_children();
  if (children.empty()) throw std::invalid_argument("limb_lengths: topology has no limbs");

  const int T = seq.frame_count();
  const int J = seq.joint_count();
  LimbLengthMatrix out;
  out.lengths.resize(T, static_cast<Eigen::Index>(children.size()));
  for (int t = 0; t < T; ++t) {
    const Eigen::Index base = static_cast<Eigen::Index>(t) * J;
    for (std::size_t l = 0; l < children.size(); ++l) {
      const int c = children[l];
      const int p = topo.parent_of[c];
      out.lengths(t, static_cast<Eigen::Index>(l)) =
          (seq.frames.row(base + c) - seq.frames.row(base + p)).norm();
    }
  }
  if (normalize) {
    const double mean_total = out.lengths.sum() / static_cast<double>(T);
    if (!(mean_total > 0.0))
      throw std::invalid_argument("limb_lengths: zero skeleton length, cannot normalize");
    out.lengths /= mean_total;
    out.normalization_constant = mean_total;
  }
  return out;
}

Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& frames, int frame_count, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("finite_difference: order must be 1 or 2");
  if (frame_count < order + 1)
    throw std::invalid_argument("finite_difference: sequence too short for requested order");
  const Eigen::Index J = frames.rows() / frame_count;
  const Eigen::Index n = static_cast<Eigen::Index>(frame_count - 1) * J;
  Eigen::MatrixXd diff = frames.bottomRows(n) - frames.topRows(n);
  if (order == 1) return diff;
  return finite_difference(diff, frame_count - 1, 1);
}

Eigen::MatrixXd finite_difference(const PoseSequence& seq, int order) {
  return finite_difference(seq.frames, seq.frame_count(), order);
}

PoseSequence horizontal_flip(const PoseSequence& seq) {
  const auto& topo = *seq.topology;
  if (topo.left_right_pairs.empty())
    throw std::invalid_argument("horizontal_flip: topology declares no left/right pairs");

  PoseSequence out = seq;
  out.frames.col(topo.lateral_axis) = -seq.frames.col(topo.lateral_axis);
  const int T = seq.frame_count();
  const int J = seq.joint_count();
  for (int t = 0; t < T; ++t) {
    const Eigen::Index base = static_cast<Eigen::Index>(t) * J;
    for (const auto& [a, b] : topo.left_right_pairs)
      out.frames.row(base + a).swap(out.frames.row(base + b));
  }
  return out;
}

}  // namespace poseseq
