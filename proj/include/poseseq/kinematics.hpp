#pragma once

#include <Eigen/Dense>

#include "poseseq/pose_sequence.hpp"

namespace poseseq {

// Per-frame limb lengths, one column per limb in child-joint order.
struct LimbLengthMatrix {
  Eigen::MatrixXd lengths;             // (T, J-1)
  double normalization_constant = 1.0;  // divisor applied (1 when raw)
};

// Euclidean parent-child distances per frame. With normalize set, every entry
// is divided by the sequence-mean total skeleton length and the divisor is
// recorded. Throws on a limbless topology or a zero normalizer.
LimbLengthMatrix limb_lengths(const PoseSequence& seq, bool normalize);

// Order-1 (T-1 rows of frame deltas) or order-2 (T-2 rows of second
// differences) temporal differences of a (T*J, 3) frame block. Order 2 is
// computed as the first difference applied twice. Throws if T <= order.
Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& frames, int frame_count, int order);
Eigen::MatrixXd finite_difference(const PoseSequence& seq, int order);

// Negates the lateral axis and swaps each left/right joint pair. An exact
// involution. Throws if the topology declares no pairs.
PoseSequence horizontal_flip(const PoseSequence& seq);

}  // namespace poseseq
