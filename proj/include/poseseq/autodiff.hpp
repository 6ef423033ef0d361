#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace poseseq::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// A matrix value, optionally recorded on a tape. Ops on unrecorded values
// compute eagerly and store nothing, so inference allocates only its live
// working set; ops touching a recorded value also push a backward closure.
struct Var {
  std::shared_ptr<const Mat> value;
  Tape* tape = nullptr;
  int node = -1;

  const Mat& val() const { return *value; }
  double scalar() const { return (*value)(0, 0); }
  Eigen::Index rows() const { return value->rows(); }
  Eigen::Index cols() const { return value->cols(); }
  bool recorded() const { return tape != nullptr && node >= 0; }
};

class Tape {
 public:
  // Recorded input; gradient readable after backward().
  Var leaf(Mat value);

  // Seeds d(root)/d(root) = 1 and propagates in reverse creation order.
  // root must be 1x1.
  void backward(const Var& root);

  const Mat& grad(const Var& v) const;
  bool has_grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // --- op plumbing ---
  // The closure receives this node's accumulated gradient.
  int record(std::function<void(const Mat&)> backward_fn);
  void accumulate(int node, const Mat& delta);

 private:
  struct Node {
    Mat grad;
    bool grad_set = false;
    std::function<void(const Mat&)> backward;
  };
  std::vector<Node> nodes_;
};

Var constant(Mat value);
Var constant(double scalar);  // 1x1

// Elementwise / structural
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_rowvec(const Var& a, const Var& row);  // row is 1xC, broadcast over rows
Var sub_rowvec(const Var& a, const Var& row);
Var one_minus(const Var& a);
Var abs_elem(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);

// Matrix products
Var matmul(const Var& a, const Var& b);     // a * b
Var matmul_nt(const Var& a, const Var& b);  // a * b^T

// Row-wise nonlinearities
Var softmax_rows(const Var& a);
Var layernorm_rows(const Var& a, const Var& gain, const Var& offset, double eps = 1e-5);

// Shape / indexing
Var row_block(const Var& a, Eigen::Index start, Eigen::Index count);
Var col_block(const Var& a, Eigen::Index start, Eigen::Index count);
Var hcat(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(const Var& a, std::vector<int> index);  // out.row(i) = a.row(index[i])
Var reshape_rowmajor(const Var& a, Eigen::Index rows, Eigen::Index cols);

// Reductions and scalar algebra (scalars are 1x1 Vars)
Var sum_all(const Var& a);
Var colsum(const Var& a);                        // (1, C)
Var rownorm(const Var& a);                       // (R, 1) Euclidean row norms
Var mul_scalar_var(const Var& a, const Var& s);  // s is 1x1
Var div_scalar_var(const Var& a, const Var& s);  // s is 1x1

}  // namespace poseseq::ad
