#include "poseseq/skeleton.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace poseseq {

int SkeletonTopology::root() const {
  for (int j = 0; j < joint_count; ++j)
    if (parent_of[j] < 0) return j;
  throw std::invalid_argument("topology has no root joint");
}

std::vector<int> SkeletonTopology::limb_children() const {
  std::vector<int> children;
  children.reserve(joint_count > 0 ? joint_count - 1 : 0);
  for (int j = 0; j < joint_count; ++j)
    if (parent_of[j] >= 0) children.push_back(j);
  return children;
}

void SkeletonTopology::validate() const {
  if (joint_count < 1) throw std::invalid_argument("topology: joint_count must be >= 1");
  if (static_cast<int>(parent_of.size()) != joint_count)
    throw std::invalid_argument("topology: parent_of size does not match joint_count");
  int roots = 0;
  for (int j = 0; j < joint_count; ++j) {
    const int p = parent_of[j];
    if (p < 0) {
      ++roots;
    } else if (p >= joint_count) {
      throw std::invalid_argument("topology: parent index out of range");
    } else if (p == j) {
      throw std::invalid_argument("topology: joint is its own parent");
    }
  }
  if (roots != 1) throw std::invalid_argument("topology: exactly one root required");

  // Walking to the root must terminate within J steps from every joint;
  // together with the single root this makes the parent graph a connected tree.
  for (int j = 0; j < joint_count; ++j) {
    int cur = j, steps = 0;
    while (parent_of[cur] >= 0) {
      cur = parent_of[cur];
      if (++steps > joint_count) throw std::invalid_argument("topology: parent graph has a cycle");
    }
  }

  if (!joint_names.empty() && static_cast<int>(joint_names.size()) != joint_count)
    throw std::invalid_argument("topology: joint_names size does not match joint_count");

  std::set<int> seen;
  for (const auto& [a, b] : left_right_pairs) {
    if (a < 0 || a >= joint_count || b < 0 || b >= joint_count)
      throw std::invalid_argument("topology: flip pair index out of range");
    if (a == b) throw std::invalid_argument("topology: flip pair joints must differ");
    if (!seen.insert(a).second || !seen.insert(b).second)
      throw std::invalid_argument("topology: flip pairs must be disjoint");
  }
  if (lateral_axis < 0 || lateral_axis > 2)
    throw std::invalid_argument("topology: lateral_axis must be 0, 1 or 2");
}

SkeletonTopology SkeletonTopology::h36m17() {
  SkeletonTopology t;
  t.joint_count = 17;
  t.parent_of = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  t.joint_names = {"pelvis",     "r_hip",   "r_knee",     "r_ankle", "l_hip",   "l_knee",
                   "l_ankle",    "spine",   "thorax",     "neck",    "head",    "l_shoulder",
                   "l_elbow",    "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};
  t.left_right_pairs = {{1, 4}, {2, 5}, {3, 6}, {11, 14}, {12, 15}, {13, 16}};
  t.lateral_axis = 0;
  return t;
}

SkeletonTopology SkeletonTopology::preset(const std::string& name) {
  if (name == "h36m17") return h36m17();
  throw std::invalid_argument("unknown topology preset: " + name);
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

SkeletonTopology SkeletonTopology::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file: " + path);
  SkeletonTopology t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tok = tokenize(line);
    if (tok.empty()) continue;
    const std::string& key = tok[0];
    if (key == "joints") {
      if (tok.size() != 2) throw std::runtime_error("topology file: joints expects one value");
      t.joint_count = std::stoi(tok[1]);
    } else if (key == "parents") {
      for (std::size_t i = 1; i < tok.size(); ++i) t.parent_of.push_back(std::stoi(tok[i]));
    } else if (key == "names") {
      t.joint_names.assign(tok.begin() + 1, tok.end());
    } else if (key == "pairs") {
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto colon = tok[i].find(':');
        if (colon == std::string::npos)
          throw std::runtime_error("topology file: pair must be a:b, got " + tok[i]);
        t.left_right_pairs.emplace_back(std::stoi(tok[i].substr(0, colon)),
                                        std::stoi(tok[i].substr(colon + 1)));
      }
    } else if (key == "lateral_axis") {
      if (tok.size() != 2) throw std::runtime_error("topology file: lateral_axis expects one value");
      t.lateral_axis = std::stoi(tok[1]);
    } else {
      throw std::runtime_error("topology file: unknown key " + key);
    }
  }
  t.validate();
  return t;
}

void SkeletonTopology::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write topology file: " + path);
  out << "joints " << joint_count << "\n";
  out << "parents";
  for (int p : parent_of) out << ' ' << p;
  out << "\n";
  if (!joint_names.empty()) {
    out << "names";
    for (const auto& n : joint_names) out << ' ' << n;
    out << "\n";
  }
  if (!left_right_pairs.empty()) {
    out << "pairs";
    for (const auto& [a, b] : left_right_pairs) out << ' ' << a << ':' << b;
    out << "\n";
  }
  out << "lateral_axis " << lateral_axis << "\n";
}

}  // namespace poseseq
