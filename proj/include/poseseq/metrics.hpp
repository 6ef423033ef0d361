#pragma once

#include <string>
#include <vector>

#include "poseseq/pose_sequence.hpp"

namespace poseseq {

struct MetricOptions {
  bool root_relative = false;       // subtract the root joint before MPJPE
  bool sequence_level_pa = false;   // one similarity transform for the whole sequence
  bool accel_per_second = false;    // scale accel by fps^2 (per-second^2 units)
};

struct EvalReport {
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double accel_mm = 0.0;
  std::vector<double> per_frame_mpjpe_mm;  // NaN where the ground truth is invalid
  int frames_evaluated = 0;

  std::string to_text() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

// Mean per-joint Euclidean error in millimeters over frames with valid
// ground truth.
double mpjpe(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& = {});

// Per-frame Procrustes similarity alignment (rotation via SVD with
// determinant correction, optimal uniform scale, centroid translation)
// before measuring the mean joint error. Degenerate frames are skipped with
// a warning.
double pa_mpjpe(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& = {});

// Mean norm of the difference of second temporal differences, in mm per
// frame^2 (or per second^2 with accel_per_second). Requires T >= 3.
double accel_error(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& = {});

EvalReport evaluate(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& = {});

}  // namespace poseseq
