#include "poseseq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace poseseq {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

constexpr const char* kMagic = "mp-v1";

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const MotionPrior& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  nlohmann::json cfg = {{"version", kMagic},
                        {"depth", model.config.depth},
                        {"heads", model.config.heads},
                        {"feature_dim", model.config.feature_dim},
                        {"embed_dim", model.config.embed_dim},
                        {"max_frames", model.config.max_frames},
                        {"mlp_ratio", model.config.mlp_ratio},
                        {"dropout", model.config.dropout},
                        {"joint_count", model.joint_count}};
  out << kMagic << "\n" << cfg.dump() << "\n" << model.params.size() << "\n";
  for (const auto& [name, tensor] : model.params) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const std::string dtype = "f64";
    write_u32(out, static_cast<std::uint32_t>(dtype.size()));
    out.write(dtype.data(), static_cast<std::streamsize>(dtype.size()));
    write_u32(out, 2);
    write_u64(out, static_cast<std::uint64_t>(tensor.rows()));
    write_u64(out, static_cast<std::uint64_t>(tensor.cols()));
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
        const double v = tensor(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  if (!out) throw std::runtime_error("write failure on checkpoint: " + path);
}

MotionPrior load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic)
    throw std::runtime_error("checkpoint version mismatch: expected mp-v1, got '" + magic + "'");
  std::string cfg_line;
  std::getline(in, cfg_line);
  nlohmann::json cfg = nlohmann::json::parse(cfg_line);
  if (cfg.value("version", "") != kMagic)
    throw std::runtime_error("checkpoint config version mismatch");

  MotionPrior m;
  m.config.depth = cfg.at("depth").get<int>();
  m.config.heads = cfg.at("heads").get<int>();
  m.config.feature_dim = cfg.at("feature_dim").get<int>();
  m.config.embed_dim = cfg.at("embed_dim").get<int>();
  m.config.max_frames = cfg.at("max_frames").get<int>();
  m.config.mlp_ratio = cfg.at("mlp_ratio").get<double>();
  m.config.dropout = cfg.at("dropout").get<double>();
  m.joint_count = cfg.at("joint_count").get<int>();
  m.config.validate();

  std::string count_line;
  std::getline(in, count_line);
  const std::size_t n_tensors = std::stoull(count_line);

  for (std::size_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t dtype_len = read_u32(in);
    std::string dtype(dtype_len, '\0');
    in.read(dtype.data(), dtype_len);
    if (dtype != "f64")
      throw std::runtime_error("checkpoint tensor '" + name + "' has unsupported dtype " + dtype);
    const std::uint32_t ndims = read_u32(in);
    if (ndims != 2) throw std::runtime_error("checkpoint tensor '" + name + "' is not 2-D");
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    Eigen::MatrixXd t(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        t(r, c) = v;
      }
    if (!in) throw std::runtime_error("checkpoint truncated while reading tensor '" + name + "'");
    m.params.emplace(std::move(name), std::move(t));
  }

  // The stored tensor set must be exactly what the config implies.
  std::size_t expected = 0;
  MotionPrior::for_each_param(m.config, m.joint_count,
                              [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
                                ++expected;
                                auto it = m.params.find(name);
                                if (it == m.params.end())
                                  throw std::runtime_error("checkpoint missing tensor: " + name);
                                if (it->second.rows() != r || it->second.cols() != c)
                                  throw std::runtime_error("checkpoint tensor shape mismatch: " +
                                                           name);
                              });
  if (m.params.size() != expected)
    throw std::runtime_error("checkpoint holds unexpected extra tensors");
  return m;
}

}  // namespace poseseq
