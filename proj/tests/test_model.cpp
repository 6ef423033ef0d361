#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "poseseq/checkpoint.hpp"
#include "poseseq/model.hpp"
#include "poseseq/rng.hpp"

using namespace poseseq;
using ad::Mat;

namespace {

std::shared_ptr<const SkeletonTopology> star_topology(int joints) {
  auto t = std::make_shared<SkeletonTopology>();
  t->joint_count = joints;
  t->parent_of.assign(static_cast<std::size_t>(joints), 0);
  t->parent_of[0] = -1;
  return t;
}

MotionPriorConfig tiny_config() {
  MotionPriorConfig c;
  c.depth = 1;
  c.heads = 2;
  c.feature_dim = 8;
  c.embed_dim = 8;
  c.max_frames = 6;
  c.mlp_ratio = 2.0;
  return c;
}

PoseSequence random_input(int T, int J, Rng& rng) {
  PoseSequence s = make_sequence(T, star_topology(J), 25.0);
  for (Eigen::Index r = 0; r < s.frames.rows(); ++r)
    for (int d = 0; d < 3; ++d) s.frames(r, d) = rng.normal(0.4);
  return s;
}

// ---- independent forward oracle: plain Eigen re-composition of the
// documented architecture, sharing no code with the implementation ----

Mat oracle_layernorm(const Mat& x, const Mat& g, const Mat& b) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    double var = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(x.cols());
    const double is = 1.0 / std::sqrt(var + 1e-5);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out(r, c) = (x(r, c) - mu) * is * g(0, c) + b(0, c);
  }
  return out;
}

Mat oracle_gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}

Mat oracle_softmax_rows(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::RowVectorXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

Mat oracle_block(const Mat& x, const MotionPrior& m, const std::string& prefix,
                 Eigen::Index group) {
  const auto& P = m.params;
  auto at = [&](const std::string& n) -> const Mat& { return P.at(prefix + n); };
  const int heads = m.config.heads;
  const Eigen::Index hd = m.config.feature_dim / heads;

  Mat q = (x * at(".attn.wq")).rowwise() + Eigen::RowVectorXd(at(".attn.bq").row(0));
  Mat k = (x * at(".attn.wk")).rowwise() + Eigen::RowVectorXd(at(".attn.bk").row(0));
  Mat v = (x * at(".attn.wv")).rowwise() + Eigen::RowVectorXd(at(".attn.bv").row(0));

  Mat cat(x.rows(), x.cols());
  for (Eigen::Index g0 = 0; g0 < x.rows(); g0 += group) {
    for (int h = 0; h < heads; ++h) {
      const Mat qh = q.block(g0, h * hd, group, hd);
      const Mat kh = k.block(g0, h * hd, group, hd);
      const Mat vh = v.block(g0, h * hd, group, hd);
      const Mat attn =
          oracle_softmax_rows(qh * kh.transpose() / std::sqrt(static_cast<double>(hd)));
      cat.block(g0, h * hd, group, hd) = attn * vh;
    }
  }
  Mat y = (cat * at(".attn.wp")).rowwise() + Eigen::RowVectorXd(at(".attn.bp").row(0));
  Mat h1 = oracle_layernorm(x + y, at(".ln1.g"), at(".ln1.b"));
  Mat mlp =
      (oracle_gelu((h1 * at(".mlp.w1")).rowwise() + Eigen::RowVectorXd(at(".mlp.b1").row(0))) *
       at(".mlp.w2"))
          .rowwise() +
      Eigen::RowVectorXd(at(".mlp.b2").row(0));
  return oracle_layernorm(h1 + mlp, at(".ln2.g"), at(".ln2.b"));
}

Mat oracle_permute(const Mat& x, int T, int J, bool to_joint_major) {
  Mat out(x.rows(), x.cols());
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j) {
      if (to_joint_major)
        out.row(static_cast<Eigen::Index>(j) * T + t) =
            x.row(static_cast<Eigen::Index>(t) * J + j);
      else
        out.row(static_cast<Eigen::Index>(t) * J + j) =
            x.row(static_cast<Eigen::Index>(j) * T + t);
    }
  return out;
}

Mat oracle_forward(const MotionPrior& m, const Mat& coords, int T) {
  const int J = m.joint_count;
  const auto& P = m.params;
  Mat h = (coords * P.at("embed.w")).rowwise() + Eigen::RowVectorXd(P.at("embed.b").row(0));
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j) {
      h.row(static_cast<Eigen::Index>(t) * J + j) += P.at("pos.spatial").row(j);
      h.row(static_cast<Eigen::Index>(t) * J + j) += P.at("pos.temporal").row(t);
    }
  h = (h * P.at("in_proj.w")).rowwise() + Eigen::RowVectorXd(P.at("in_proj.b").row(0));

  Mat a = h, b = h;
  for (int d = 0; d < m.config.depth; ++d) {
    const std::string l = "layers." + std::to_string(d) + ".";
    Mat sa = oracle_block(a, m, l + "st.spatial", J);
    sa = oracle_permute(oracle_block(oracle_permute(sa, T, J, true), m, l + "st.temporal", T), T,
                        J, false);
    Mat sb = oracle_permute(oracle_block(oracle_permute(b, T, J, true), m, l + "ts.temporal", T),
                            T, J, false);
    sb = oracle_block(sb, m, l + "ts.spatial", J);

    Mat fused_in(sa.rows(), 2 * sa.cols());
    fused_in << sa, sb;
    Mat alpha = ((fused_in * P.at(l + "fuse.w")).rowwise() +
                 Eigen::RowVectorXd(P.at(l + "fuse.b").row(0)))
                    .unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    Mat fused =
        alpha.cwiseProduct(sa) +
        (Mat::Ones(alpha.rows(), alpha.cols()) - alpha).cwiseProduct(sb);
    a = fused;
    b = fused;
  }
  return (a * P.at("head.w")).rowwise() + Eigen::RowVectorXd(P.at("head.b").row(0));
}

}  // namespace

TEST_CASE("forward matches an independently composed oracle") {
  Rng rng(42);
  const auto cfg = tiny_config();
  const MotionPrior m = MotionPrior::init(cfg, 3, 99);

  PoseSequence zero = make_sequence(2, star_topology(3), 25.0);
  const PoseSequence out_zero = m.forward(zero);
  CHECK(out_zero.frames.allFinite());
  CHECK((out_zero.frames - oracle_forward(m, zero.frames, 2)).cwiseAbs().maxCoeff() < 1e-12);

  PoseSequence noisy = random_input(4, 3, rng);
  const PoseSequence out = m.forward(noisy);
  CHECK((out.frames - oracle_forward(m, noisy.frames, 4)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward shape preservation and determinism") {
  Rng rng(7);
  MotionPriorConfig cfg = tiny_config();
  cfg.max_frames = 243;
  const MotionPrior m = MotionPrior::init(cfg, 17, 1);
  for (int T : {1, 16, 243}) {
    PoseSequence in = random_input(T, 17, rng);
    const PoseSequence out = m.forward(in);
    CHECK(out.frame_count() == T);
    CHECK(out.frames.rows() == in.frames.rows());
    CHECK(out.frames.cols() == 3);
    CHECK(out.frames.allFinite());
    const PoseSequence again = m.forward(in);
    CHECK((out.frames - again.frames).cwiseAbs().maxCoeff() == 0.0);  // bitwise
  }
  PoseSequence too_long = random_input(244, 17, rng);
  CHECK_THROWS_AS(m.forward(too_long), std::invalid_argument);
}

TEST_CASE("attention rows are stochastic and fusion gates lie in (0,1)") {
  Rng rng(8);
  const MotionPrior m = MotionPrior::init(tiny_config(), 4, 2);
  const int T = 5, J = 4;
  PoseSequence in = random_input(T, J, rng);
  ForwardTrace trace;
  m.forward(in, nullptr, &trace);
  // 4 attention blocks; spatial ones emit T groups, temporal ones J groups,
  // each with `heads` matrices
  const std::size_t expected =
      2 * static_cast<std::size_t>(T) * m.config.heads + 2 * static_cast<std::size_t>(J) * m.config.heads;
  CHECK(trace.attention.size() == expected);
  for (const auto& attn : trace.attention) {
    for (Eigen::Index r = 0; r < attn->rows(); ++r)
      CHECK(attn->row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(attn->minCoeff() >= 0.0);
  }
  REQUIRE(trace.fusion_gates.size() == 1);
  CHECK(trace.fusion_gates[0]->minCoeff() > 0.0);
  CHECK(trace.fusion_gates[0]->maxCoeff() < 1.0);
}

TEST_CASE("single-token attention degenerates to the projection path") {
  Rng rng(9);
  // J = 1: every spatial attention matrix is the 1x1 scalar 1
  const MotionPrior m = MotionPrior::init(tiny_config(), 1, 3);
  PoseSequence in = random_input(3, 1, rng);
  ForwardTrace trace;
  const PoseSequence out = m.forward(in, nullptr, &trace);
  CHECK(out.frames.allFinite());
  bool saw_scalar = false;
  for (const auto& attn : trace.attention)
    if (attn->rows() == 1 && attn->cols() == 1) {
      CHECK((*attn)(0, 0) == 1.0);
      saw_scalar = true;
    }
  CHECK(saw_scalar);

  // T = 1: temporal attention over a single token
  PoseSequence one = random_input(1, 4, rng);
  const MotionPrior m4 = MotionPrior::init(tiny_config(), 4, 4);
  CHECK(m4.forward(one).frames.allFinite());
}

TEST_CASE("spatial block is permutation equivariant") {
  Rng rng(10);
  const MotionPrior m = MotionPrior::init(tiny_config(), 4, 5);
  const int T = 2, J = 4;
  Mat feats(T * J, m.config.feature_dim);
  for (Eigen::Index r = 0; r < feats.rows(); ++r)
    for (Eigen::Index c = 0; c < feats.cols(); ++c) feats(r, c) = rng.normal();

  const Mat base = m.spatial_attention(feats, T, 0, StreamKind::spatial_first);

  const std::vector<int> perm = {2, 0, 3, 1};
  Mat permuted(T * J, feats.cols());
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      permuted.row(t * J + j) = feats.row(t * J + perm[static_cast<std::size_t>(j)]);
  const Mat out_perm = m.spatial_attention(permuted, T, 0, StreamKind::spatial_first);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      CHECK((out_perm.row(t * J + j) - base.row(t * J + perm[static_cast<std::size_t>(j)]))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
}

TEST_CASE("full forward permutation equivariance with permuted position table") {
  Rng rng(11);
  const int T = 2, J = 4;
  const MotionPrior m = MotionPrior::init(tiny_config(), J, 6);
  PoseSequence in = random_input(T, J, rng);
  const Mat base = m.forward(in).frames;

  const std::vector<int> perm = {2, 0, 3, 1};  // token j reads old joint perm[j]
  MotionPrior mp = m;
  const Mat pos = m.params.at("pos.spatial");
  for (int j = 0; j < J; ++j)
    mp.params.at("pos.spatial").row(j) = pos.row(perm[static_cast<std::size_t>(j)]);
  PoseSequence pin = in;
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      pin.frames.row(t * J + j) = in.frames.row(t * J + perm[static_cast<std::size_t>(j)]);
  const Mat out = mp.forward(pin).frames;
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      CHECK((out.row(t * J + j) - base.row(t * J + perm[static_cast<std::size_t>(j)]))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
}

TEST_CASE("temporal block is time-reversal equivariant") {
  Rng rng(12);
  const int T = 4, J = 2;
  const MotionPrior m = MotionPrior::init(tiny_config(), J, 7);
  Mat feats(T * J, m.config.feature_dim);
  for (Eigen::Index r = 0; r < feats.rows(); ++r)
    for (Eigen::Index c = 0; c < feats.cols(); ++c) feats(r, c) = rng.normal();
  const Mat base = m.temporal_attention(feats, T, 0, StreamKind::spatial_first);

  Mat reversed(T * J, feats.cols());
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j) reversed.row(t * J + j) = feats.row((T - 1 - t) * J + j);
  const Mat out_rev = m.temporal_attention(reversed, T, 0, StreamKind::spatial_first);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      CHECK((out_rev.row(t * J + j) - base.row((T - 1 - t) * J + j)).cwiseAbs().maxCoeff() <
            1e-12);
}

TEST_CASE("full forward time-reversal equivariance with reversed temporal positions") {
  Rng rng(13);
  const int T = 4, J = 3;
  const MotionPrior m = MotionPrior::init(tiny_config(), J, 8);
  PoseSequence in = random_input(T, J, rng);
  const Mat base = m.forward(in).frames;

  MotionPrior mr = m;
  for (int t = 0; t < T; ++t)
    mr.params.at("pos.temporal").row(t) = m.params.at("pos.temporal").row(T - 1 - t);
  PoseSequence rin = in;
  for (int t = 0; t < T; ++t) rin.frame(t) = in.frame(T - 1 - t);
  const Mat out = mr.forward(rin).frames;
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < J; ++j)
      CHECK((out.row(t * J + j) - base.row((T - 1 - t) * J + j)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batch processing equals separate calls") {
  Rng rng(14);
  const MotionPrior m = MotionPrior::init(tiny_config(), 3, 9);
  PoseSequence s1 = random_input(4, 3, rng);
  PoseSequence s2 = random_input(4, 3, rng);
  const Mat o1 = m.forward(s1).frames;
  const Mat o2 = m.forward(s2).frames;
  // a batch is a loop over items; no attention crosses items
  std::vector<PoseSequence> batch = {s1, s2};
  std::vector<Mat> outs;
  for (const auto& s : batch) outs.push_back(m.forward(s).frames);
  CHECK((outs[0] - o1).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((outs[1] - o2).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("parameter count is a pure function of config") {
  const auto cfg = tiny_config();
  const MotionPrior a = MotionPrior::init(cfg, 5, 1);
  const MotionPrior b = MotionPrior::init(cfg, 5, 2);
  std::size_t counted = 0;
  for (const auto& [name, t] : a.params) counted += static_cast<std::size_t>(t.size());
  CHECK(counted == MotionPrior::parameter_count(cfg, 5));
  CHECK(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) {
    CHECK(b.params.count(name) == 1);
    CHECK(t.allFinite());
  }
}

TEST_CASE("masked cells receive the mask embedding") {
  Rng rng(15);
  const MotionPrior m = MotionPrior::init(tiny_config(), 3, 10);
  PoseSequence in = random_input(2, 3, rng);
  in.frames.row(1).setZero();
  MaskMap mask(6, 0);
  mask[1] = 1;
  const Mat with_mask = m.forward(in, &mask).frames;
  const Mat without = m.forward(in).frames;
  CHECK((with_mask - without).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("small-model gradient check against finite differences") {
  Rng rng(16);
  MotionPriorConfig cfg = tiny_config();
  cfg.depth = 2;
  MotionPrior m = MotionPrior::init(cfg, 3, 11);
  PoseSequence in = random_input(3, 3, rng);
  MaskMap mask(9, 0);  // a masked cell so mask.embed participates
  mask[4] = 1;
  in.frames.row(4).setZero();

  // scalar loss = sum of outputs
  ad::Tape tape;
  auto leaves = m.bind_params(tape);
  ad::Var out = m.forward_flat(in.frames, 3, &mask, leaves, &tape);
  ad::Var loss = ad::sum_all(out);
  tape.backward(loss);

  auto eval_loss = [&]() {
    return m.forward_flat(in.frames, 3, &mask, {}, nullptr).val().sum();
  };

  Rng pick(12345);
  const double h = 1e-6;
  for (auto& [name, tensor] : m.params) {
    REQUIRE(tape.has_grad(leaves.at(name)));
    const Mat& g = tape.grad(leaves.at(name));
    const int samples = std::min<int>(3, static_cast<int>(tensor.size()));
    for (int s = 0; s < samples; ++s) {
      const auto r =
          static_cast<Eigen::Index>(pick.uniform_int(static_cast<std::uint64_t>(tensor.rows())));
      const auto c =
          static_cast<Eigen::Index>(pick.uniform_int(static_cast<std::uint64_t>(tensor.cols())));
      const double orig = tensor(r, c);
      tensor(r, c) = orig + h;
      const double fp = eval_loss();
      tensor(r, c) = orig - h;
      const double fm = eval_loss();
      tensor(r, c) = orig;
      const double fd = (fp - fm) / (2 * h);
      const double scale = std::max({1.0, std::abs(fd), std::abs(g(r, c))});
      CHECK(std::abs(g(r, c) - fd) / scale < 1e-6);
    }
  }
}

TEST_CASE("checkpoint round trip preserves forward output bitwise") {
  Rng rng(17);
  const MotionPrior m = MotionPrior::init(tiny_config(), 4, 12);
  PoseSequence in = random_input(3, 4, rng);
  const Mat before = m.forward(in).frames;

  const std::string path = "ckpt_roundtrip.mpc";
  save_checkpoint(m, path);
  const MotionPrior back = load_checkpoint(path);
  CHECK(back.config.depth == m.config.depth);
  CHECK(back.joint_count == m.joint_count);
  for (const auto& [name, t] : m.params)
    CHECK((back.params.at(name) - t).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.forward(in).frames - before).cwiseAbs().maxCoeff() == 0.0);

  {
    std::FILE* f = std::fopen("bad_ckpt.mpc", "wb");
    std::fputs("mp-v0\n{}\n0\n", f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(load_checkpoint("bad_ckpt.mpc"),
                         "checkpoint version mismatch: expected mp-v1, got 'mp-v0'",
                         std::runtime_error);
  }
}

TEST_CASE("config validation rejects bad values") {
  MotionPriorConfig c = tiny_config();
  c.heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.max_frames = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
