#pragma once

#include <cstdint>
#include <string>

#include "poseseq/model.hpp"
#include "poseseq/occlusion.hpp"
#include "poseseq/pretrain.hpp"
#include "poseseq/refine.hpp"

namespace poseseq {

// Nested configuration mirroring every tunable component, loadable from a
// JSON document. Every field is validated against its owning type's
// invariants at load time.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;  // empty: current directory or POSESEQ_OUT_DIR
  std::string topology = "h36m17";

  MotionPriorConfig model;
  MaskSpec mask;
  NoiseSpec noise;
  PretrainConfig pretrain;
  LossWeights loss_weights;
  TTTConfig ttt;
  OcclusionSpec occlusion;

  void validate() const;
  static RunConfig load_file(const std::string& path);
};

}  // namespace poseseq
