#include <doctest.h>

#include <fstream>

#include "poseseq/pseq_io.hpp"
#include "poseseq/pretrain.hpp"
#include "poseseq/refine.hpp"
#include "poseseq/rng.hpp"

using namespace poseseq;

namespace {

PoseSequence random_sequence(int T, int J, Rng& rng) {
  auto topo = std::make_shared<SkeletonTopology>();
  topo->joint_count = J;
  topo->parent_of.assign(static_cast<std::size_t>(J), 0);
  topo->parent_of[0] = -1;
  if (J >= 3) topo->left_right_pairs = {{1, 2}};
  PoseSequence s = make_sequence(T, topo, 30.0);
  for (Eigen::Index r = 0; r < s.frames.rows(); ++r)
    for (int d = 0; d < 3; ++d) s.frames(r, d) = rng.normal(1.0);
  return s;
}

void write_lines(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("pseq text round trip is bitwise for a random 10x17x3 sequence") {
  Rng rng(81);
  const PoseSequence s = random_sequence(10, 17, rng);
  write_pseq(s, "rt.pseq", PseqFrames::text);
  const PoseSequence back = read_pseq("rt.pseq");
  CHECK(back.frame_count() == 10);
  CHECK(back.joint_count() == 17);
  CHECK(back.fps == s.fps);
  CHECK(back.valid == s.valid);
  CHECK((back.frames - s.frames).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.topology->parent_of == s.topology->parent_of);
  CHECK(back.topology->left_right_pairs == s.topology->left_right_pairs);
}

TEST_CASE("pseq binary round trip and auto-detection") {
  Rng rng(82);
  const PoseSequence s = random_sequence(7, 5, rng);
  write_pseq(s, "rt_bin.pseq", PseqFrames::binary);
  const PoseSequence back = read_pseq("rt_bin.pseq");
  CHECK((back.frames - s.frames).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.valid == s.valid);
}

TEST_CASE("pseq rewrite determinism: same sequence, same bytes") {
  Rng rng(83);
  const PoseSequence s = random_sequence(6, 4, rng);
  write_pseq(s, "det_a.pseq");
  write_pseq(s, "det_b.pseq");
  std::ifstream a("det_a.pseq", std::ios::binary), b("det_b.pseq", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("pseq preserves unknown fields on read-modify-write") {
  Rng rng(84);
  const PoseSequence s = random_sequence(3, 4, rng);
  PseqFile file{s, {"x-recorded-by unit-test", "x-session 42"}};
  write_pseq_file(file, "extras.pseq");
  PseqFile back = read_pseq_file("extras.pseq");
  REQUIRE(back.extra_fields.size() == 2);
  CHECK(back.extra_fields[0] == "x-recorded-by unit-test");
  back.sequence.frames(0, 0) += 1.0;  // modify
  write_pseq_file(back, "extras2.pseq");
  const PseqFile final_file = read_pseq_file("extras2.pseq");
  CHECK(final_file.extra_fields == back.extra_fields);
}

TEST_CASE("pseq error diagnostics are distinct") {
  // version mismatch
  write_lines("bad_version.pseq", "PSEQ pseq-v0\n");
  CHECK_THROWS_WITH_AS(read_pseq("bad_version.pseq"),
                       "pseq: version mismatch, expected 'PSEQ pseq-v1', got 'PSEQ pseq-v0'",
                       std::runtime_error);

  // shape error names both numbers: declares 3 frames but carries 2 rows
  write_lines("bad_shape.pseq",
              "PSEQ pseq-v1\nfps 25\nframes 3\njoints 1\nparents -1\nvalid 1 1 1\ndata text\n"
              "0 0 0\n0 0 0\n");
  try {
    read_pseq("bad_shape.pseq");
    CHECK(false);
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("shape error") != std::string::npos);
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }

  // non-finite coordinates on a valid frame
  write_lines("bad_nan.pseq",
              "PSEQ pseq-v1\nfps 25\nframes 1\njoints 1\nparents -1\nvalid 1\ndata text\n"
              "nan 0 0\n");
  CHECK_THROWS_WITH_AS(read_pseq("bad_nan.pseq"),
                       "pseq: non-finite coordinates on valid frame 0", std::runtime_error);

  // the same NaN on an invalid frame is accepted
  write_lines("ok_nan.pseq",
              "PSEQ pseq-v1\nfps 25\nframes 2\njoints 1\nparents -1\nvalid 0 1\ndata text\n"
              "nan 0 0\n1 2 3\n");
  CHECK_NOTHROW(read_pseq("ok_nan.pseq"));
}

TEST_CASE("layered validation: all-invalid file reads fine, refinement rejects it") {
  Rng rng(85);
  PoseSequence s = random_sequence(4, 3, rng);
  std::fill(s.valid.begin(), s.valid.end(), 0);
  write_pseq(s, "all_invalid.pseq");
  const PoseSequence back = read_pseq("all_invalid.pseq");
  CHECK(back.valid_count() == 0);
  CHECK_THROWS_WITH_AS(linear_fill(back), "linear_fill: zero valid frames",
                       std::invalid_argument);
}
