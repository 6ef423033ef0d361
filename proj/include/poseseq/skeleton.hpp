#pragma once

#include <string>
#include <utility>
#include <vector>

namespace poseseq {

// Joint tree defining the J-1 limbs. Immutable value object after
// construction; validate() enforces the tree/pair invariants.
struct SkeletonTopology {
  int joint_count = 0;
  std::vector<int> parent_of;  // parent_of[root] == -1, else a valid joint index
  std::vector<std::string> joint_names;               // optional, empty or size J
  std::vector<std::pair<int, int>> left_right_pairs;  // for horizontal flips
  int lateral_axis = 0;                               // axis negated by a flip

  int root() const;
  // Child joints of the J-1 limbs, ascending (the limb enumeration order).
  std::vector<int> limb_children() const;

  // Throws std::invalid_argument on any violated invariant: exactly one root,
  // acyclic connected parent tree, symmetric disjoint flip pairs.
  void validate() const;

  bool operator==(const SkeletonTopology&) const = default;

  // 17-joint preset: pelvis root, H36M-style joint order.
  static SkeletonTopology h36m17();
  // Named preset lookup ("h36m17"); throws on unknown name.
  static SkeletonTopology preset(const std::string& name);

  // Key/value topology file (see README). Throws on malformed input.
  static SkeletonTopology load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

}  // namespace poseseq
