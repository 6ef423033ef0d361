#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "poseseq/skeleton.hpp"

namespace poseseq {

// A T x J x 3 joint-position trajectory in meters, stored flat as a
// (T*J, 3) matrix with row index t*J + j. `valid[t]` marks frames where a
// detection exists. Value semantics; operations on sequences are pure.
struct PoseSequence {
  Eigen::MatrixXd frames;  // (T*J, 3)
  double fps = 0.0;
  std::vector<std::uint8_t> valid;  // length T
  std::shared_ptr<const SkeletonTopology> topology;

  int frame_count() const { return static_cast<int>(valid.size()); }
  int joint_count() const { return topology ? topology->joint_count : 0; }

  Eigen::Ref<Eigen::Matrix<double, Eigen::Dynamic, 3>> frame(int t) {
    return frames.middleRows(static_cast<Eigen::Index>(t) * joint_count(), joint_count());
  }
  Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, 3>> frame(int t) const {
    return frames.middleRows(static_cast<Eigen::Index>(t) * joint_count(), joint_count());
  }

  Eigen::RowVector3d joint(int t, int j) const {
    return frames.row(static_cast<Eigen::Index>(t) * joint_count() + j);
  }
  void set_joint(int t, int j, const Eigen::RowVector3d& p) {
    frames.row(static_cast<Eigen::Index>(t) * joint_count() + j) = p;
  }

  bool fully_valid() const;
  int valid_count() const;

  // Throws std::invalid_argument on violated invariants: T >= 1, shape
  // consistent with topology, fps > 0, finite coordinates on valid frames.
  void validate() const;
};

// All-valid zero sequence over the given topology.
PoseSequence make_sequence(int frame_count, std::shared_ptr<const SkeletonTopology> topology,
                           double fps);

}  // namespace poseseq
