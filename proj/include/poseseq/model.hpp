#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "poseseq/autodiff.hpp"
#include "poseseq/pose_sequence.hpp"
#include "poseseq/rng.hpp"

namespace poseseq {

struct MotionPriorConfig {
  int depth = 5;
  int heads = 8;
  int feature_dim = 512;
  int embed_dim = 512;
  int max_frames = 243;
  double mlp_ratio = 4.0;
  double dropout = 0.0;
  static constexpr int input_channels = 3;

  int head_dim() const { return feature_dim / heads; }
  int mlp_hidden() const { return static_cast<int>(mlp_ratio * feature_dim); }
  // Throws on invalid values (feature_dim not divisible by heads, etc).
  void validate() const;
};

enum class StreamKind { spatial_first, temporal_first };

// Optional forward introspection: row-stochastic attention matrices and the
// per-layer fusion gates.
struct ForwardTrace {
  std::vector<std::shared_ptr<const ad::Mat>> attention;
  std::vector<std::shared_ptr<const ad::Mat>> fusion_gates;
};

// Per-(t,j) mask flags, row t*J + j; masked cells had their coordinates
// zeroed and receive the learned mask embedding on input.
using MaskMap = std::vector<std::uint8_t>;

// Sequence-to-sequence denoiser: per-joint embedding plus learned spatial and
// temporal position tables, `depth` layers each running a spatial->temporal
// stream and a temporal->spatial stream, per-element sigmoid-gated fusion of
// the two, and a linear head back to 3D coordinates.
class MotionPrior {
 public:
  MotionPriorConfig config;
  int joint_count = 0;
  std::map<std::string, ad::Mat> params;  // ordered by name

  static MotionPrior init(const MotionPriorConfig& cfg, int joint_count, std::uint64_t seed);

  // Enumerates the parameter tensor shapes implied by (cfg, J).
  static void for_each_param(const MotionPriorConfig& cfg, int joint_count,
                             const std::function<void(const std::string&, Eigen::Index,
                                                      Eigen::Index)>& fn);
  static std::size_t parameter_count(const MotionPriorConfig& cfg, int joint_count);

  // Denoising forward pass; output sequence has the input's shape, fps and
  // topology, with all frames valid. Input must be dense (gaps pre-filled or
  // masked). Throws if T > max_frames or J differs from construction.
  PoseSequence forward(const PoseSequence& noisy, const MaskMap* mask = nullptr,
                       ForwardTrace* trace = nullptr) const;

  // Tape-building forward over a flat (T*J, 3) coordinate matrix. `leaves`
  // must come from bind_params(tape) when training; pass {} for inference.
  ad::Var forward_flat(const ad::Mat& coords, int frame_count, const MaskMap* mask,
                       const std::map<std::string, ad::Var>& leaves, ad::Tape* tape,
                       ForwardTrace* trace = nullptr, Rng* dropout_rng = nullptr) const;

  // Records every parameter as a tape leaf (name -> Var).
  std::map<std::string, ad::Var> bind_params(ad::Tape& tape) const;

  // Single transformer blocks exposed for inspection: multi-head
  // self-attention over joints within each frame (spatial) or over frames per
  // joint (temporal), each followed by residual + LayerNorm + MLP + residual
  // + LayerNorm. `features` is (T*J, feature_dim), row t*J + j.
  ad::Mat spatial_attention(const ad::Mat& features, int frame_count, int layer,
                            StreamKind stream, ForwardTrace* trace = nullptr) const;
  ad::Mat temporal_attention(const ad::Mat& features, int frame_count, int layer,
                             StreamKind stream, ForwardTrace* trace = nullptr) const;
};

}  // namespace poseseq
