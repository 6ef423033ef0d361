#pragma once

#include <string>

#include "poseseq/model.hpp"

namespace poseseq {

// Single-file archive, version "mp-v1": a text magic line, one JSON config
// line, a tensor count line, then per-tensor binary records
// (u32 name length, name, u32 dtype length, dtype "f64", u32 ndims,
//  u64 dims..., row-major little-endian payload). See README for the layout.
void save_checkpoint(const MotionPrior& model, const std::string& path);

// Throws std::runtime_error on version mismatch, unknown/missing tensors, or
// shapes inconsistent with the stored config.
MotionPrior load_checkpoint(const std::string& path);

}  // namespace poseseq
