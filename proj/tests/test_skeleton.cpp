#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "poseseq/kinematics.hpp"
#include "poseseq/pose_sequence.hpp"
#include "poseseq/rng.hpp"
#include "poseseq/skeleton.hpp"

using namespace poseseq;

namespace {

std::shared_ptr<const SkeletonTopology> chain_topology(int joints) {
  auto t = std::make_shared<SkeletonTopology>();
  t->joint_count = joints;
  t->parent_of.resize(static_cast<std::size_t>(joints));
  t->parent_of[0] = -1;
  for (int j = 1; j < joints; ++j) t->parent_of[static_cast<std::size_t>(j)] = j - 1;
  return t;
}

PoseSequence random_sequence(int T, std::shared_ptr<const SkeletonTopology> topo, Rng& rng) {
  PoseSequence s = make_sequence(T, std::move(topo), 25.0);
  for (Eigen::Index r = 0; r < s.frames.rows(); ++r)
    for (int d = 0; d < 3; ++d) s.frames(r, d) = rng.normal(0.5);
  return s;
}

}  // namespace

TEST_CASE("topology validation") {
  auto good = SkeletonTopology::h36m17();
  CHECK_NOTHROW(good.validate());
  CHECK(good.limb_children().size() == 16);
  CHECK(good.root() == 0);

  SkeletonTopology no_root = good;
  no_root.parent_of[0] = 1;
  CHECK_THROWS_AS(no_root.validate(), std::invalid_argument);

  SkeletonTopology two_roots = good;
  two_roots.parent_of[7] = -1;
  CHECK_THROWS_AS(two_roots.validate(), std::invalid_argument);

  SkeletonTopology overlapping_pairs = good;
  overlapping_pairs.left_right_pairs.push_back({1, 2});
  CHECK_THROWS_AS(overlapping_pairs.validate(), std::invalid_argument);

  CHECK_THROWS_AS(SkeletonTopology::preset("nope"), std::invalid_argument);
}

TEST_CASE("topology file round trip") {
  const auto t = SkeletonTopology::h36m17();
  const std::string path = "topo_roundtrip.txt";
  t.save_file(path);
  const auto back = SkeletonTopology::load_file(path);
  CHECK(back == t);
}

TEST_CASE("limb_lengths unit offset") {
  auto topo = chain_topology(2);
  PoseSequence s = make_sequence(1, topo, 25.0);
  s.set_joint(0, 1, {0.0, 1.0, 0.0});
  const auto m = limb_lengths(s, false);
  CHECK(m.lengths.rows() == 1);
  CHECK(m.lengths.cols() == 1);
  CHECK(m.lengths(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.normalization_constant == 1.0);
}

TEST_CASE("limb_lengths time-constant pose gives equal rows") {
  Rng rng(7);
  auto topo = chain_topology(4);
  PoseSequence s = random_sequence(1, topo, rng);
  PoseSequence two = make_sequence(2, topo, 25.0);
  two.frame(0) = s.frame(0);
  two.frame(1) = s.frame(0);
  const auto m = limb_lengths(two, false);
  CHECK((m.lengths.row(0) - m.lengths.row(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("limb_lengths normalized 3-joint chain") {
  auto topo = chain_topology(3);
  PoseSequence s = make_sequence(1, topo, 25.0);
  s.set_joint(0, 0, {0.0, 0.0, 0.0});
  s.set_joint(0, 1, {1.0, 0.0, 0.0});
  s.set_joint(0, 2, {1.0, 2.0, 0.0});
  const auto m = limb_lengths(s, true);
  // raw lengths (1, 2); total 3; hand-computed normalized row (1/3, 2/3)
  CHECK(m.normalization_constant == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(m.lengths(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(m.lengths(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("limb_lengths errors") {
  auto lonely = chain_topology(1);
  PoseSequence s = make_sequence(2, lonely, 25.0);
  CHECK_THROWS_AS(limb_lengths(s, false), std::invalid_argument);

  auto topo = chain_topology(3);
  PoseSequence coincident = make_sequence(2, topo, 25.0);  // all joints at origin
  CHECK_THROWS_WITH_AS(limb_lengths(coincident, true),
                       "limb_lengths: zero skeleton length, cannot normalize",
                       std::invalid_argument);
}

TEST_CASE("limb_lengths invariant under rigid motion and scale") {
  Rng rng(11);
  auto topo = std::make_shared<const SkeletonTopology>(SkeletonTopology::h36m17());
  PoseSequence s = random_sequence(5, topo, rng);
  const auto base = limb_lengths(s, false);
  const auto base_norm = limb_lengths(s, true);

  PoseSequence moved = s;
  for (int t = 0; t < s.frame_count(); ++t) {
    const Eigen::Matrix3d rot =
        Eigen::AngleAxisd(rng.uniform(0, 2 * M_PI),
                          Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized())
            .toRotationMatrix();
    const Eigen::RowVector3d shift(rng.normal(2.0), rng.normal(2.0), rng.normal(2.0));
    moved.frame(t) = (s.frame(t) * rot.transpose()).rowwise() + shift;
  }
  const auto rigid = limb_lengths(moved, false);
  CHECK((rigid.lengths - base.lengths).cwiseAbs().maxCoeff() < 1e-9);

  PoseSequence scaled = s;
  scaled.frames *= 4.2;
  const auto scaled_norm = limb_lengths(scaled, true);
  CHECK((scaled_norm.lengths - base_norm.lengths).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("finite_difference on linear and quadratic trajectories") {
  auto topo = chain_topology(2);
  const int T = 6;
  PoseSequence s = make_sequence(T, topo, 25.0);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < 2; ++j) s.set_joint(t, j, {static_cast<double>(t), 0.0, 0.0});

  const auto v = finite_difference(s, 1);
  CHECK(v.rows() == (T - 1) * 2);
  CHECK((v.col(0).array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK(v.col(1).cwiseAbs().maxCoeff() == 0.0);

  const auto a = finite_difference(s, 2);
  CHECK(a.rows() == (T - 2) * 2);
  CHECK(a.cwiseAbs().maxCoeff() == 0.0);

  // x_t = t^2 on one coordinate: symbolic second difference is exactly 2
  PoseSequence q = make_sequence(T, topo, 25.0);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < 2; ++j) q.set_joint(t, j, {static_cast<double>(t) * t, 0.0, 0.0});
  const auto a2 = finite_difference(q, 2);
  CHECK((a2.col(0).array() - 2.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("finite_difference order-2 equals twice order-1 and rejects short input") {
  Rng rng(3);
  auto topo = chain_topology(3);
  PoseSequence s = random_sequence(7, topo, rng);
  const auto direct = finite_difference(s, 2);
  const auto twice = finite_difference(finite_difference(s, 1), s.frame_count() - 1, 1);
  CHECK((direct - twice).cwiseAbs().maxCoeff() == 0.0);

  PoseSequence one = make_sequence(1, topo, 25.0);
  CHECK_THROWS_AS(finite_difference(one, 1), std::invalid_argument);
  PoseSequence two = make_sequence(2, topo, 25.0);
  CHECK_THROWS_AS(finite_difference(two, 2), std::invalid_argument);
}

TEST_CASE("horizontal_flip fixes mirror-symmetric poses up to pair relabeling") {
  auto topo = std::make_shared<const SkeletonTopology>(SkeletonTopology::h36m17());
  PoseSequence s = make_sequence(1, topo, 25.0);
  // arms-out pose, left and right exactly mirrored across the lateral axis
  s.set_joint(0, 7, {0.0, 0.2, 0.0});
  s.set_joint(0, 8, {0.0, 0.5, 0.0});
  s.set_joint(0, 9, {0.0, 0.6, 0.0});
  s.set_joint(0, 10, {0.0, 0.7, 0.0});
  const Eigen::RowVector3d arm[3] = {{0.2, 0.5, 0.0}, {0.45, 0.5, 0.0}, {0.7, 0.5, 0.0}};
  const Eigen::RowVector3d leg[3] = {{0.1, -0.1, 0.0}, {0.1, -0.5, 0.0}, {0.1, -0.9, 0.0}};
  const int left_arm[3] = {11, 12, 13}, right_arm[3] = {14, 15, 16};
  const int left_leg[3] = {4, 5, 6}, right_leg[3] = {1, 2, 3};
  for (int i = 0; i < 3; ++i) {
    s.set_joint(0, left_arm[i], arm[i]);
    s.set_joint(0, right_arm[i], {-arm[i](0), arm[i](1), arm[i](2)});
    s.set_joint(0, left_leg[i], leg[i]);
    s.set_joint(0, right_leg[i], {-leg[i](0), leg[i](1), leg[i](2)});
  }
  const PoseSequence flipped = horizontal_flip(s);
  CHECK((flipped.frames - s.frames).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("horizontal_flip involution, pair swap and limb preservation") {
  Rng rng(23);
  auto topo = std::make_shared<const SkeletonTopology>(SkeletonTopology::h36m17());
  PoseSequence s = random_sequence(4, topo, rng);

  const PoseSequence flipped = horizontal_flip(s);
  // left wrist (13) lands on the right wrist (16) slot with x negated
  const Eigen::RowVector3d lw = s.joint(1, 13);
  CHECK(flipped.joint(1, 16)(0) == -lw(0));
  CHECK(flipped.joint(1, 16)(1) == lw(1));
  CHECK(flipped.joint(1, 16)(2) == lw(2));

  const PoseSequence back = horizontal_flip(flipped);
  CHECK((back.frames - s.frames).cwiseAbs().maxCoeff() == 0.0);  // bitwise involution

  const auto before = limb_lengths(s, false);
  const auto after = limb_lengths(flipped, false);
  // flipping permutes limbs within left/right pairs; compare sorted rows
  for (int t = 0; t < s.frame_count(); ++t) {
    Eigen::RowVectorXd b = before.lengths.row(t), a = after.lengths.row(t);
    std::sort(b.data(), b.data() + b.size());
    std::sort(a.data(), a.data() + a.size());
    CHECK((b - a).cwiseAbs().maxCoeff() < 1e-12);
  }

  auto bare = chain_topology(3);
  PoseSequence no_pairs = make_sequence(2, bare, 25.0);
  CHECK_THROWS_AS(horizontal_flip(no_pairs), std::invalid_argument);
}

TEST_CASE("sequence validation") {
  auto topo = chain_topology(2);
  PoseSequence s = make_sequence(3, topo, 25.0);
  CHECK_NOTHROW(s.validate());
  s.fps = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.fps = 25.0;
  s.frames(2, 1) = std::nan("");
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.valid[1] = 0;  // the NaN sits on frame 1? row 2 = frame 1, joint 0
  CHECK_NOTHROW(s.validate());
}
