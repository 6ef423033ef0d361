#include "poseseq/model.hpp"

#include <cmath>
#include <stdexcept>

namespace poseseq {

using ad::Mat;
using ad::Var;

void MotionPriorConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("model config: depth must be >= 1");
  if (heads < 1) throw std::invalid_argument("model config: heads must be >= 1");
  if (feature_dim < 1 || embed_dim < 1)
    throw std::invalid_argument("model config: dimensions must be >= 1");
  if (feature_dim % heads != 0)
    throw std::invalid_argument("model config: feature_dim must be divisible by heads");
  if (max_frames < 1) throw std::invalid_argument("model config: max_frames must be >= 1");
  if (mlp_ratio <= 0.0) throw std::invalid_argument("model config: mlp_ratio must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("model config: dropout must be in [0, 1)");
}

namespace {

const char* stream_tag(StreamKind s) { return s == StreamKind::spatial_first ? "st" : "ts"; }

std::string block_prefix(int layer, StreamKind stream, const char* which) {
  return "layers." + std::to_string(layer) + "." + stream_tag(stream) + "." + which;
}

void for_each_block_param(const MotionPriorConfig& cfg, const std::string& prefix,
                          const std::function<void(const std::string&, Eigen::Index,
                                                   Eigen::Index)>& fn) {
  const Eigen::Index F = cfg.feature_dim;
  const Eigen::Index H = cfg.mlp_hidden();
  fn(prefix + ".attn.wq", F, F);
  fn(prefix + ".attn.bq", 1, F);
  fn(prefix + ".attn.wk", F, F);
  fn(prefix + ".attn.bk", 1, F);
  fn(prefix + ".attn.wv", F, F);
  fn(prefix + ".attn.bv", 1, F);
  fn(prefix + ".attn.wp", F, F);
  fn(prefix + ".attn.bp", 1, F);
  fn(prefix + ".ln1.g", 1, F);
  fn(prefix + ".ln1.b", 1, F);
  fn(prefix + ".mlp.w1", F, H);
  fn(prefix + ".mlp.b1", 1, H);
  fn(prefix + ".mlp.w2", H, F);
  fn(prefix + ".mlp.b2", 1, F);
  fn(prefix + ".ln2.g", 1, F);
  fn(prefix + ".ln2.b", 1, F);
}

// Truncated normal in [-2s, 2s] by resampling.
double trunc_normal(Rng& rng, double s) {
  double x;
  do {
    x = rng.normal(s);
  } while (std::abs(x) > 2.0 * s);
  return x;
}

}  // namespace

void MotionPrior::for_each_param(const MotionPriorConfig& cfg, int joint_count,
                                 const std::function<void(const std::string&, Eigen::Index,
                                                          Eigen::Index)>& fn) {
  const Eigen::Index E = cfg.embed_dim;
  const Eigen::Index F = cfg.feature_dim;
  fn("embed.w", 3, E);
  fn("embed.b", 1, E);
  fn("mask.embed", 1, E);
  fn("pos.spatial", joint_count, E);
  fn("pos.temporal", cfg.max_frames, E);
  fn("in_proj.w", E, F);
  fn("in_proj.b", 1, F);
  for (int d = 0; d < cfg.depth; ++d) {
    for (StreamKind s : {StreamKind::spatial_first, StreamKind::temporal_first}) {
      for_each_block_param(cfg, block_prefix(d, s, "spatial"), fn);
      for_each_block_param(cfg, block_prefix(d, s, "temporal"), fn);
    }
    fn("layers." + std::to_string(d) + ".fuse.w", 2 * F, F);
    fn("layers." + std::to_string(d) + ".fuse.b", 1, F);
  }
  fn("head.w", F, 3);
  fn("head.b", 1, 3);
}

std::size_t MotionPrior::parameter_count(const MotionPriorConfig& cfg, int joint_count) {
  std::size_t n = 0;
  for_each_param(cfg, joint_count,
                 [&n](const std::string&, Eigen::Index r, Eigen::Index c) {
                   n += static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
                 });
  return n;
}

MotionPrior MotionPrior::init(const MotionPriorConfig& cfg, int joint_count, std::uint64_t seed) {
  cfg.validate();
  if (joint_count < 1) throw std::invalid_argument("model init: joint_count must be >= 1");
  MotionPrior m;
  m.config = cfg;
  m.joint_count = joint_count;
  Rng rng(seed);
  for_each_param(cfg, joint_count, [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
    Mat w(r, c);
    const bool is_ln_gain = name.ends_with("ln1.g") || name.ends_with("ln2.g");
    const bool is_bias = name.ends_with(".b") || name.ends_with(".bq") || name.ends_with(".bk") ||
                         name.ends_with(".bv") || name.ends_with(".bp") ||
                         name.ends_with(".b1") || name.ends_with(".b2") ||
                         name.ends_with("ln1.b") || name.ends_with("ln2.b");
    if (is_ln_gain) {
      w.setOnes();
    } else if (is_bias) {
      w.setZero();
    } else {
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) w(i, j) = trunc_normal(rng, 0.02);
    }
    m.params.emplace(name, std::move(w));
  });
  return m;
}

std::map<std::string, Var> MotionPrior::bind_params(ad::Tape& tape) const {
  std::map<std::string, Var> leaves;
  for (const auto& [name, value] : params) leaves.emplace(name, tape.leaf(value));
  return leaves;
}

namespace {

// Parameter lookup: recorded leaf when training, plain constant otherwise.
struct ParamView {
  const std::map<std::string, Mat>& params;
  const std::map<std::string, Var>& leaves;

  Var operator()(const std::string& name) const {
    if (auto it = leaves.find(name); it != leaves.end()) return it->second;
    auto it = params.find(name);
    if (it == params.end()) throw std::logic_error("model: unknown parameter " + name);
    return ad::constant(it->second);
  }
};

Var linear(const Var& x, const Var& w, const Var& b) {
  return ad::add_rowvec(ad::matmul(x, w), b);
}

Var maybe_dropout(Var x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  Mat keep(x.rows(), x.cols());
  const double inv = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < keep.rows(); ++i)
    for (Eigen::Index j = 0; j < keep.cols(); ++j)
      keep(i, j) = rng->bernoulli(rate) ? 0.0 : inv;
  return ad::cmul(x, ad::constant(std::move(keep)));
}

// Multi-head self attention over contiguous row groups of `group` tokens,
// then residual + LayerNorm + MLP + residual + LayerNorm.
Var attention_block(const Var& x, const ParamView& p, const std::string& prefix,
                    const MotionPriorConfig& cfg, Eigen::Index group, ForwardTrace* trace,
                    Rng* dropout_rng) {
  const int heads = cfg.heads;
  const Eigen::Index hd = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(hd));

  Var q = linear(x, p(prefix + ".attn.wq"), p(prefix + ".attn.bq"));
  Var k = linear(x, p(prefix + ".attn.wk"), p(prefix + ".attn.bk"));
  Var v = linear(x, p(prefix + ".attn.wv"), p(prefix + ".attn.bv"));

  const Eigen::Index n_groups = x.rows() / group;
  std::vector<Var> group_outs;
  group_outs.reserve(static_cast<std::size_t>(n_groups));
  for (Eigen::Index g = 0; g < n_groups; ++g) {
    const Eigen::Index r0 = g * group;
    Var qg = ad::row_block(q, r0, group);
    Var kg = ad::row_block(k, r0, group);
    Var vg = ad::row_block(v, r0, group);
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Var qh = ad::col_block(qg, h * hd, hd);
      Var kh = ad::col_block(kg, h * hd, hd);
      Var vh = ad::col_block(vg, h * hd, hd);
      Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dk));
      if (trace) trace->attention.push_back(attn.value);
      head_outs.push_back(ad::matmul(attn, vh));
    }
    group_outs.push_back(ad::hcat(head_outs));
  }
  Var heads_cat = n_groups == 1 ? group_outs[0] : ad::concat_rows(group_outs);
  Var attended = linear(heads_cat, p(prefix + ".attn.wp"), p(prefix + ".attn.bp"));
  attended = maybe_dropout(attended, cfg.dropout, dropout_rng);

  Var h1 = ad::layernorm_rows(ad::add(x, attended), p(prefix + ".ln1.g"), p(prefix + ".ln1.b"));
  Var m = linear(ad::gelu(linear(h1, p(prefix + ".mlp.w1"), p(prefix + ".mlp.b1"))),
                 p(prefix + ".mlp.w2"), p(prefix + ".mlp.b2"));
  m = maybe_dropout(m, cfg.dropout, dropout_rng);
  return ad::layernorm_rows(ad::add(h1, m), p(prefix + ".ln2.g"), p(prefix + ".ln2.b"));
}

std::vector<int> to_joint_major(int T, int J) {
  std::vector<int> idx(static_cast<std::size_t>(T) * J);
  for (int j = 0; j < J; ++j)
    for (int t = 0; t < T; ++t) idx[static_cast<std::size_t>(j) * T + t] = t * J + j;
  return idx;
}

std::vector<int> to_time_major(int T, int J) {
  std::vector<int> idx(static_cast<std::size_t>(T) * J);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j) idx[static_cast<std::size_t>(t) * J + j] = j * T + t;
  return idx;
}

// Spatial: tokens are the J joints of one frame (rows already time-major).
Var spatial_block(const Var& x, const ParamView& p, const std::string& prefix,
                  const MotionPriorConfig& cfg, int T, int J, ForwardTrace* trace, Rng* rng) {
  (void)T;
  return attention_block(x, p, prefix, cfg, J, trace, rng);
}

// Temporal: tokens are the T positions of one joint; permute to joint-major,
// attend within each joint's run, permute back.
Var temporal_block(const Var& x, const ParamView& p, const std::string& prefix,
                   const MotionPriorConfig& cfg, int T, int J, ForwardTrace* trace, Rng* rng) {
  Var xj = ad::gather_rows(x, to_joint_major(T, J));
  Var yj = attention_block(xj, p, prefix, cfg, T, trace, rng);
  return ad::gather_rows(yj, to_time_major(T, J));
}

}  // namespace

Var MotionPrior::forward_flat(const Mat& coords, int frame_count, const MaskMap* mask,
                              const std::map<std::string, Var>& leaves, ad::Tape* tape,
                              ForwardTrace* trace, Rng* dropout_rng) const {
  const int T = frame_count;
  const int J = joint_count;
  if (T < 1) throw std::invalid_argument("model forward: empty sequence");
  if (T > config.max_frames)
    throw std::invalid_argument(
        "model forward: sequence length exceeds max_frames; refine in windows (see ttt window "
        "option)");
  if (coords.rows() != static_cast<Eigen::Index>(T) * J || coords.cols() != 3)
    throw std::invalid_argument("model forward: coordinate matrix must be (T*J, 3)");
  if (tape && leaves.empty())
    throw std::logic_error("model forward: training tape requires bound parameter leaves");

  ParamView p{params, leaves};

  // Token embedding + learned positions. Masked cells carry the mask token.
  Var x = linear(ad::constant(coords), p("embed.w"), p("embed.b"));
  if (mask != nullptr) {
    if (static_cast<int>(mask->size()) != T * J)
      throw std::invalid_argument("model forward: mask size must be T*J");
    Mat flags(static_cast<Eigen::Index>(T) * J, 1);
    bool any = false;
    for (int i = 0; i < T * J; ++i) {
      flags(i, 0) = (*mask)[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
      any = any || (*mask)[static_cast<std::size_t>(i)];
    }
    if (any) x = ad::add(x, ad::matmul(ad::constant(std::move(flags)), p("mask.embed")));
  }
  std::vector<int> jidx(static_cast<std::size_t>(T) * J), tidx(static_cast<std::size_t>(T) * J);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j) {
      jidx[static_cast<std::size_t>(t) * J + j] = j;
      tidx[static_cast<std::size_t>(t) * J + j] = t;
    }
  x = ad::add(x, ad::gather_rows(p("pos.spatial"), jidx));
  x = ad::add(x, ad::gather_rows(p("pos.temporal"), tidx));
  x = linear(x, p("in_proj.w"), p("in_proj.b"));

  Var a = x, b = x;
  for (int d = 0; d < config.depth; ++d) {
    const std::string la = block_prefix(d, StreamKind::spatial_first, "spatial");
    const std::string lb = block_prefix(d, StreamKind::spatial_first, "temporal");
    Var sa = spatial_block(a, p, la, config, T, J, trace, dropout_rng);
    sa = temporal_block(sa, p, lb, config, T, J, trace, dropout_rng);

    const std::string lc = block_prefix(d, StreamKind::temporal_first, "temporal");
    const std::string ld = block_prefix(d, StreamKind::temporal_first, "spatial");
    Var sb = temporal_block(b, p, lc, config, T, J, trace, dropout_rng);
    sb = spatial_block(sb, p, ld, config, T, J, trace, dropout_rng);

    const std::string fw = "layers." + std::to_string(d) + ".fuse.w";
    const std::string fb = "layers." + std::to_string(d) + ".fuse.b";
    Var alpha = ad::sigmoid(linear(ad::hcat({sa, sb}), p(fw), p(fb)));
    if (trace) trace->fusion_gates.push_back(alpha.value);
    Var fused = ad::add(ad::cmul(alpha, sa), ad::cmul(ad::one_minus(alpha), sb));
    a = fused;
    b = fused;
  }
  return linear(a, p("head.w"), p("head.b"));
}

PoseSequence MotionPrior::forward(const PoseSequence& noisy, const MaskMap* mask,
                                  ForwardTrace* trace) const {
  if (noisy.joint_count() != joint_count)
    throw std::invalid_argument("model forward: sequence joint count differs from model");
  Var out = forward_flat(noisy.frames, noisy.frame_count(), mask, {}, nullptr, trace);
  PoseSequence refined = noisy;
  refined.frames = out.val();
  std::fill(refined.valid.begin(), refined.valid.end(), 1);
  return refined;
}

namespace {
const std::map<std::string, Var> kNoLeaves;
}

ad::Mat MotionPrior::spatial_attention(const Mat& features, int frame_count, int layer,
                                       StreamKind stream, ForwardTrace* trace) const {
  const int J = static_cast<int>(features.rows()) / frame_count;
  if (features.cols() != config.feature_dim ||
      static_cast<Eigen::Index>(frame_count) * J != features.rows())
    throw std::invalid_argument("spatial_attention: feature shape mismatch");
  ParamView p{params, kNoLeaves};
  return spatial_block(ad::constant(features), p, block_prefix(layer, stream, "spatial"), config,
                       frame_count, J, trace, nullptr)
      .val();
}

ad::Mat MotionPrior::temporal_attention(const Mat& features, int frame_count, int layer,
                                        StreamKind stream, ForwardTrace* trace) const {
  const int J = static_cast<int>(features.rows()) / frame_count;
  if (features.cols() != config.feature_dim ||
      static_cast<Eigen::Index>(frame_count) * J != features.rows())
    throw std::invalid_argument("temporal_attention: feature shape mismatch");
  ParamView p{params, kNoLeaves};
  return temporal_block(ad::constant(features), p, block_prefix(layer, stream, "temporal"),
                        config, frame_count, J, trace, nullptr)
      .val();
}

}  // namespace poseseq
