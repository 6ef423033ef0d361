#include "poseseq/pose_sequence.hpp"

#include <cmath>
#include <stdexcept>

namespace poseseq {

bool PoseSequence::fully_valid() const {
  for (auto v : valid)
    if (!v) return false;
  return true;
}

int PoseSequence::valid_count() const {
  int n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

void PoseSequence::validate() const {
  if (!topology) throw std::invalid_argument("sequence: missing topology");
  topology->validate();
  const int T = frame_count();
  const int J = joint_count();
  if (T < 1) throw std::invalid_argument("sequence: at least one frame required");
  if (frames.rows() != static_cast<Eigen::Index>(T) * J || frames.cols() != 3)
    throw std::invalid_argument("sequence: frame tensor shape does not match T x J x 3");
  if (!(fps > 0.0)) throw std::invalid_argument("sequence: fps must be positive");
  for (int t = 0; t < T; ++t) {
    if (!valid[t]) continue;
    for (int j = 0; j < J; ++j)
      if (!frames.row(static_cast<Eigen::Index>(t) * J + j).allFinite())
        throw std::invalid_argument("sequence: non-finite coordinates on a valid frame");
  }
}

PoseSequence make_sequence(int frame_count, std::shared_ptr<const SkeletonTopology> topology,
                           double fps) {
  PoseSequence s;
  s.topology = std::move(topology);
  s.fps = fps;
  s.valid.assign(frame_count, 1);
  s.frames = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(frame_count) * s.joint_count(), 3);
  return s;
}

}  // namespace poseseq
