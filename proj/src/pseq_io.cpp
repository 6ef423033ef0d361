#include "poseseq/pseq_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace poseseq {

namespace {

static_assert(std::endian::native == std::endian::little,
              "pseq binary frames assume a little-endian host");

constexpr const char* kVersion = "pseq-v1";

std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("pseq: failed to format a double");
  return std::string(buf, p);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::runtime_error("pseq: malformed number '" + s + "'");
  return v;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void write_pseq_file(const PseqFile& file, const std::string& path, PseqFrames frames) {
  const PoseSequence& seq = file.sequence;
  seq.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pseq: cannot write " + path);
  const auto& topo = *seq.topology;

  out << "PSEQ " << kVersion << "\n";
  out << "fps " << fmt_double(seq.fps) << "\n";
  out << "frames " << seq.frame_count() << "\n";
  out << "joints " << seq.joint_count() << "\n";
  out << "parents";
  for (int p : topo.parent_of) out << ' ' << p;
  out << "\n";
  if (!topo.joint_names.empty()) {
    out << "names";
    for (const auto& n : topo.joint_names) out << ' ' << n;
    out << "\n";
  }
  if (!topo.left_right_pairs.empty()) {
    out << "pairs";
    for (const auto& [a, b] : topo.left_right_pairs) out << ' ' << a << ':' << b;
    out << "\n";
  }
  out << "lateral_axis " << topo.lateral_axis << "\n";
  out << "valid";
  for (auto v : seq.valid) out << ' ' << (v ? 1 : 0);
  out << "\n";
  for (const auto& line : file.extra_fields) out << line << "\n";

  if (frames == PseqFrames::text) {
    out << "data text\n";
    for (Eigen::Index r = 0; r < seq.frames.rows(); ++r)
      out << fmt_double(seq.frames(r, 0)) << ' ' << fmt_double(seq.frames(r, 1)) << ' '
          << fmt_double(seq.frames(r, 2)) << "\n";
  } else {
    out << "data binary " << seq.frames.rows() * 3 * 8 << "\n";
    for (Eigen::Index r = 0; r < seq.frames.rows(); ++r)
      for (int d = 0; d < 3; ++d) {
        const double v = seq.frames(r, d);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  if (!out) throw std::runtime_error("pseq: write failure on " + path);
}

void write_pseq(const PoseSequence& seq, const std::string& path, PseqFrames frames) {
  write_pseq_file(PseqFile{seq, {}}, path, frames);
}

PseqFile read_pseq_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pseq: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("pseq: empty file " + path);
  {
    auto tok = split_ws(line);
    if (tok.size() != 2 || tok[0] != "PSEQ" || tok[1] != kVersion)
      throw std::runtime_error("pseq: version mismatch, expected 'PSEQ pseq-v1', got '" + line +
                               "'");
  }

  PseqFile file;
  auto topo = std::make_shared<SkeletonTopology>();
  PoseSequence& seq = file.sequence;
  int T = -1, J = -1;
  bool have_valid = false;

  while (std::getline(in, line)) {
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string& key = tok[0];
    if (key == "fps") {
      if (tok.size() != 2) throw std::runtime_error("pseq: fps expects one value");
      seq.fps = parse_double(tok[1]);
    } else if (key == "frames") {
      T = std::stoi(tok.at(1));
    } else if (key == "joints") {
      J = std::stoi(tok.at(1));
    } else if (key == "parents") {
      for (std::size_t i = 1; i < tok.size(); ++i) topo->parent_of.push_back(std::stoi(tok[i]));
    } else if (key == "names") {
      topo->joint_names.assign(tok.begin() + 1, tok.end());
    } else if (key == "pairs") {
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto colon = tok[i].find(':');
        if (colon == std::string::npos)
          throw std::runtime_error("pseq: pair must be a:b, got " + tok[i]);
        topo->left_right_pairs.emplace_back(std::stoi(tok[i].substr(0, colon)),
                                            std::stoi(tok[i].substr(colon + 1)));
      }
    } else if (key == "lateral_axis") {
      topo->lateral_axis = std::stoi(tok.at(1));
    } else if (key == "valid") {
      for (std::size_t i = 1; i < tok.size(); ++i)
        seq.valid.push_back(tok[i] == "1" ? 1 : 0);
      have_valid = true;
    } else if (key == "data") {
      if (T < 1 || J < 1) throw std::runtime_error("pseq: data before frames/joints declaration");
      topo->joint_count = J;
      topo->validate();
      if (!have_valid) seq.valid.assign(static_cast<std::size_t>(T), 1);
      if (static_cast<int>(seq.valid.size()) != T)
        throw std::runtime_error("pseq: shape error, valid has " +
                                 std::to_string(seq.valid.size()) + " entries but frames is " +
                                 std::to_string(T));
      seq.topology = topo;
      seq.frames.resize(static_cast<Eigen::Index>(T) * J, 3);

      if (tok.size() >= 2 && tok[1] == "text") {
        std::string row;
        for (Eigen::Index r = 0; r < seq.frames.rows(); ++r) {
          if (!std::getline(in, row))
            throw std::runtime_error("pseq: shape error, expected " +
                                     std::to_string(seq.frames.rows()) + " coordinate rows, got " +
                                     std::to_string(r));
          auto nums = split_ws(row);
          if (nums.size() != 3)
            throw std::runtime_error("pseq: coordinate row must hold 3 numbers, got '" + row +
                                     "'");
          for (int d = 0; d < 3; ++d) seq.frames(r, d) = parse_double(nums[static_cast<std::size_t>(d)]);
        }
      } else if (tok.size() >= 3 && tok[1] == "binary") {
        const long declared = std::stol(tok[2]);
        const long expected = static_cast<long>(seq.frames.rows()) * 3 * 8;
        if (declared != expected)
          throw std::runtime_error("pseq: shape error, binary block declares " +
                                   std::to_string(declared) + " bytes but frames need " +
                                   std::to_string(expected));
        for (Eigen::Index r = 0; r < seq.frames.rows(); ++r)
          for (int d = 0; d < 3; ++d) {
            double v = 0;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            seq.frames(r, d) = v;
          }
        if (!in) throw std::runtime_error("pseq: truncated binary frame block");
      } else {
        throw std::runtime_error("pseq: data line must be 'data text' or 'data binary <bytes>'");
      }

      for (int t = 0; t < T; ++t) {
        if (!seq.valid[static_cast<std::size_t>(t)]) continue;
        for (int j = 0; j < J; ++j)
          if (!seq.frames.row(static_cast<Eigen::Index>(t) * J + j).allFinite())
            throw std::runtime_error("pseq: non-finite coordinates on valid frame " +
                                     std::to_string(t));
      }
      return file;
    } else {
      file.extra_fields.push_back(line);  // preserved on rewrite
    }
  }
  throw std::runtime_error("pseq: missing data section in " + path);
}

PoseSequence read_pseq(const std::string& path) { return read_pseq_file(path).sequence; }

}  // namespace poseseq
