#include "poseseq/run_config.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace poseseq {

namespace {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  mask.validate();
  noise.validate();
  pretrain.validate();
  loss_weights.validate();
  ttt.validate();
  occlusion.validate();
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;

  RunConfig c;
  maybe(j, "seed", c.seed);
  maybe(j, "out_dir", c.out_dir);
  maybe(j, "topology", c.topology);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    maybe(m, "depth", c.model.depth);
    maybe(m, "heads", c.model.heads);
    maybe(m, "feature_dim", c.model.feature_dim);
    maybe(m, "embed_dim", c.model.embed_dim);
    maybe(m, "max_frames", c.model.max_frames);
    maybe(m, "mlp_ratio", c.model.mlp_ratio);
    maybe(m, "dropout", c.model.dropout);
  }
  if (j.contains("mask")) {
    const auto& m = j.at("mask");
    maybe(m, "frame_ratio", c.mask.frame_mask_ratio);
    maybe(m, "joint_ratio", c.mask.joint_mask_ratio);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    maybe(n, "keyframes", c.noise.keyframes);
    maybe(n, "residual_sigma", c.noise.residual_sigma);
    maybe(n, "keyframe_sigma", c.noise.keyframe_sigma);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    maybe(p, "epochs", c.pretrain.epochs);
    maybe(p, "learning_rate", c.pretrain.learning_rate);
    maybe(p, "batch_size", c.pretrain.batch_size);
    maybe(p, "velocity_weight", c.pretrain.velocity_weight);
    maybe(p, "sequence_length", c.pretrain.sequence_length);
    maybe(p, "flip_augment", c.pretrain.flip_augment);
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    maybe(w, "lim", c.loss_weights.limb);
    maybe(w, "mpjp", c.loss_weights.mpjp);
    maybe(w, "nmpjp", c.loss_weights.nmpjp);
    maybe(w, "vel", c.loss_weights.velocity);
  }
  if (j.contains("ttt")) {
    const auto& t = j.at("ttt");
    maybe(t, "epochs", c.ttt.epochs);
    maybe(t, "learning_rate", c.ttt.learning_rate);
    maybe(t, "weight_decay", c.ttt.weight_decay);
    maybe(t, "lr_decay", c.ttt.lr_decay_per_epoch);
    maybe(t, "window", c.ttt.window);
  }
  if (j.contains("occlusion")) {
    const auto& o = j.at("occlusion");
    maybe(o, "span_seconds", c.occlusion.span_seconds);
    maybe(o, "period_seconds", c.occlusion.period_seconds);
    maybe(o, "coverage", c.occlusion.coverage);
    maybe(o, "survivor_noise_sigma", c.occlusion.survivor_noise_sigma);
    maybe(o, "per_joint_dropout", c.occlusion.per_joint_dropout);
  }
  c.validate();
  return c;
}

}  // namespace poseseq
