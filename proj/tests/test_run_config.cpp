#include <doctest.h>

#include <fstream>

#include "poseseq/run_config.hpp"

using namespace poseseq;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("run config loads nested sections and applies defaults") {
  write_file("cfg_ok.json", R"({
    "seed": 42,
    "topology": "h36m17",
    "model": {"depth": 2, "feature_dim": 64, "embed_dim": 64, "heads": 4, "max_frames": 48},
    "mask": {"frame_ratio": 0.2},
    "pretrain": {"epochs": 5},
    "loss_weights": {"lim": 100.0},
    "ttt": {"epochs": 10, "learning_rate": 0.001},
    "occlusion": {"coverage": 0.5}
  })");
  const RunConfig c = RunConfig::load_file("cfg_ok.json");
  CHECK(c.seed == 42);
  CHECK(c.model.depth == 2);
  CHECK(c.model.heads == 4);
  CHECK(c.mask.frame_mask_ratio == 0.2);
  CHECK(c.mask.joint_mask_ratio == 0.05);  // default kept
  CHECK(c.pretrain.epochs == 5);
  CHECK(c.pretrain.learning_rate == 0.0005);  // default kept
  CHECK(c.loss_weights.limb == 100.0);
  CHECK(c.loss_weights.mpjp == 1.0);
  CHECK(c.ttt.epochs == 10);
  CHECK(c.occlusion.coverage == 0.5);
}

TEST_CASE("run config validates against owning-type invariants at load") {
  write_file("cfg_bad_mask.json", R"({"mask": {"frame_ratio": 0.8, "joint_ratio": 0.8}})");
  CHECK_THROWS_AS(RunConfig::load_file("cfg_bad_mask.json"), std::invalid_argument);

  write_file("cfg_bad_model.json", R"({"model": {"feature_dim": 10, "heads": 3}})");
  CHECK_THROWS_AS(RunConfig::load_file("cfg_bad_model.json"), std::invalid_argument);

  write_file("cfg_bad_occ.json", R"({"occlusion": {"span_seconds": 5.0, "period_seconds": 1.0}})");
  CHECK_THROWS_AS(RunConfig::load_file("cfg_bad_occ.json"), std::invalid_argument);

  CHECK_THROWS_AS(RunConfig::load_file("does_not_exist.json"), std::runtime_error);
}
