#include "poseseq/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace poseseq::ad {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

std::shared_ptr<const Mat> share(Mat&& m) { return std::make_shared<const Mat>(std::move(m)); }

Tape* tape_of(const Var& a) { return a.recorded() ? a.tape : nullptr; }

Tape* tape_of(const Var& a, const Var& b) {
  if (a.recorded() && b.recorded() && a.tape != b.tape)
    throw std::logic_error("autodiff: operands recorded on different tapes");
  return a.recorded() ? a.tape : tape_of(b);
}

Var make(Tape* tape, Mat value, std::function<void(const Mat&)> backward_fn) {
  Var out;
  out.value = share(std::move(value));
  if (tape) {
    out.tape = tape;
    out.node = tape->record(std::move(backward_fn));
  }
  return out;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + op);
}

}  // namespace

Var Tape::leaf(Mat value) {
  Var out;
  out.value = share(std::move(value));
  out.tape = this;
  out.node = record({});
  return out;
}

int Tape::record(std::function<void(const Mat&)> backward_fn) {
  nodes_.push_back(Node{});
  nodes_.back().backward = std::move(backward_fn);
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node, const Mat& delta) {
  if (node < 0) return;
  Node& n = nodes_[static_cast<std::size_t>(node)];
  if (!n.grad_set) {
    n.grad = delta;
    n.grad_set = true;
  } else {
    n.grad += delta;
  }
}

void Tape::backward(const Var& root) {
  if (!root.recorded() || root.tape != this)
    throw std::logic_error("autodiff: backward root is not recorded on this tape");
  if (root.rows() != 1 || root.cols() != 1)
    throw std::logic_error("autodiff: backward root must be a 1x1 scalar");
  accumulate(root.node, Mat::Ones(1, 1));
  for (int i = root.node; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad_set && n.backward) n.backward(n.grad);
  }
}

const Mat& Tape::grad(const Var& v) const {
  if (!v.recorded() || v.tape != this)
    throw std::logic_error("autodiff: grad of a value not recorded on this tape");
  const Node& n = nodes_[static_cast<std::size_t>(v.node)];
  if (!n.grad_set) throw std::logic_error("autodiff: gradient not populated; call backward first");
  return n.grad;
}

bool Tape::has_grad(const Var& v) const {
  return v.recorded() && v.tape == this && nodes_[static_cast<std::size_t>(v.node)].grad_set;
}

Var constant(Mat value) {
  Var out;
  out.value = share(std::move(value));
  return out;
}

Var constant(double scalar) { return constant(Mat::Constant(1, 1, scalar)); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape* t = tape_of(a, b);
  Mat v = a.val() + b.val();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, nb = b.node;
  return make(t, std::move(v), [t, na, nb](const Mat& g) {
    t->accumulate(na, g);
    t->accumulate(nb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape* t = tape_of(a, b);
  Mat v = a.val() - b.val();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, nb = b.node;
  return make(t, std::move(v), [t, na, nb](const Mat& g) {
    t->accumulate(na, g);
    t->accumulate(nb, Mat(-g));
  });
}

Var cmul(const Var& a, const Var& b) {
  check_same_shape(a, b, "cmul");
  Tape* t = tape_of(a, b);
  Mat v = a.val().cwiseProduct(b.val());
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, nb = b.node;
  auto av = a.value, bv = b.value;
  return make(t, std::move(v), [t, na, nb, av, bv](const Mat& g) {
    t->accumulate(na, g.cwiseProduct(*bv));
    t->accumulate(nb, g.cwiseProduct(*av));
  });
}

Var scale(const Var& a, double c) {
  Tape* t = tape_of(a);
  Mat v = c * a.val();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  return make(t, std::move(v), [t, na, c](const Mat& g) { t->accumulate(na, Mat(c * g)); });
}

Var add_rowvec(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("autodiff: add_rowvec expects a 1xC row");
  Tape* t = tape_of(a, row);
  Mat v = a.val().rowwise() + row.val().row(0);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, nr = row.node;
  return make(t, std::move(v), [t, na, nr](const Mat& g) {
    t->accumulate(na, g);
    t->accumulate(nr, Mat(g.colwise().sum()));
  });
}

Var sub_rowvec(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("autodiff: sub_rowvec expects a 1xC row");
  Tape* t = tape_of(a, row);
  Mat v = a.val().rowwise() - row.val().row(0);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, nr = row.node;
  return make(t, std::move(v), [t, na, nr](const Mat& g) {
    t->accumulate(na, g);
    t->accumulate(nr, Mat(-g.colwise().sum()));
  });
}

Var one_minus(const Var& a) {
  Tape* t = tape_of(a);
  Mat v = Mat::Ones(a.rows(), a.cols()) - a.val();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  return make(t, std::move(v), [t, na](const Mat& g) { t->accumulate(na, Mat(-g)); });
}

Var abs_elem(const Var& a) {
  Tape* t = tape_of(a);
  Mat v = a.val().cwiseAbs();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  auto av = a.value;
  return make(t, std::move(v), [t, na, av](const Mat& g) {
    // subgradient 0 at exactly 0
    Mat s = av->unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    t->accumulate(na, g.cwiseProduct(s));
  });
}

Var sigmoid(const Var& a) {
  Tape* t = tape_of(a);
  Mat v = a.val().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  auto out = share(std::move(v));
  Var r;
  r.value = out;
  r.tape = t;
  r.node = t->record([t, na, out](const Mat& g) {
    Mat d = out->cwiseProduct(Mat::Ones(out->rows(), out->cols()) - *out);
    t->accumulate(na, g.cwiseProduct(d));
  });
  return r;
}

Var gelu(const Var& a) {
  Tape* t = tape_of(a);
  Mat v = a.val().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  auto av = a.value;
  return make(t, std::move(v), [t, na, av](const Mat& g) {
    Mat d = av->unaryExpr([](double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return cdf + x * pdf;
    });
    t->accumulate(na, g.cwiseProduct(d));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("autodiff: matmul inner dimension mismatch");
  Tape* t = tape_of(a, b);
  Mat v = a.val() * b.val();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, nb = b.node;
  auto av = a.value, bv = b.value;
  return make(t, std::move(v), [t, na, nb, av, bv](const Mat& g) {
    if (na >= 0) t->accumulate(na, Mat(g * bv->transpose()));
    if (nb >= 0) t->accumulate(nb, Mat(av->transpose() * g));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("autodiff: matmul_nt column mismatch");
  Tape* t = tape_of(a, b);
  Mat v = a.val() * b.val().transpose();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, nb = b.node;
  auto av = a.value, bv = b.value;
  return make(t, std::move(v), [t, na, nb, av, bv](const Mat& g) {
    if (na >= 0) t->accumulate(na, Mat(g * (*bv)));
    if (nb >= 0) t->accumulate(nb, Mat(g.transpose() * (*av)));
  });
}

Var softmax_rows(const Var& a) {
  Mat v(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.val().row(r).maxCoeff();
    Eigen::RowVectorXd e = (a.val().row(r).array() - m).exp();
    v.row(r) = e / e.sum();
  }
  Tape* t = tape_of(a);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  auto out = share(std::move(v));
  Var r;
  r.value = out;
  r.tape = t;
  r.node = t->record([t, na, out](const Mat& g) {
    Mat d(out->rows(), out->cols());
    for (Eigen::Index i = 0; i < out->rows(); ++i) {
      const double dot = g.row(i).dot(out->row(i));
      d.row(i) = out->row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    t->accumulate(na, d);
  });
  return r;
}

Var layernorm_rows(const Var& a, const Var& gain, const Var& offset, double eps) {
  if (gain.rows() != 1 || gain.cols() != a.cols() || offset.rows() != 1 ||
      offset.cols() != a.cols())
    throw std::invalid_argument("autodiff: layernorm gain/offset must be 1xC");
  const Eigen::Index R = a.rows(), C = a.cols();
  Mat xhat(R, C);
  Eigen::VectorXd inv_std(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const double mu = a.val().row(r).mean();
    Eigen::RowVectorXd c = a.val().row(r).array() - mu;
    const double var = c.squaredNorm() / static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = c * is;
  }
  Mat v = (xhat.array().rowwise() * gain.val().row(0).array()).rowwise() +
          offset.val().row(0).array();
  Tape* t = tape_of(a);
  if (!t) t = tape_of(gain);
  if (!t) t = tape_of(offset);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, ng = gain.node, no = offset.node;
  auto xh = share(std::move(xhat));
  auto is_v = std::make_shared<const Eigen::VectorXd>(std::move(inv_std));
  auto gv = gain.value;
  return make(t, std::move(v), [t, na, ng, no, xh, is_v, gv, C](const Mat& g) {
    if (no >= 0) t->accumulate(no, Mat(g.colwise().sum()));
    if (ng >= 0) t->accumulate(ng, Mat(g.cwiseProduct(*xh).colwise().sum()));
    if (na >= 0) {
      Mat h = g.array().rowwise() * gv->row(0).array();
      Mat d(g.rows(), C);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double mh = h.row(r).mean();
        const double mhx = h.row(r).cwiseProduct(xh->row(r)).mean();
        d.row(r) = ((*is_v)(r)) * (h.row(r).array() - mh - xh->row(r).array() * mhx).matrix();
      }
      t->accumulate(na, d);
    }
  });
}

Var row_block(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("autodiff: row_block out of range");
  Tape* t = tape_of(a);
  Mat v = a.val().middleRows(start, count);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make(t, std::move(v), [t, na, start, count, rows, cols](const Mat& g) {
    Mat d = Mat::Zero(rows, cols);
    d.middleRows(start, count) = g;
    t->accumulate(na, d);
  });
}

Var col_block(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("autodiff: col_block out of range");
  Tape* t = tape_of(a);
  Mat v = a.val().middleCols(start, count);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make(t, std::move(v), [t, na, start, count, rows, cols](const Mat& g) {
    Mat d = Mat::Zero(rows, cols);
    d.middleCols(start, count) = g;
    t->accumulate(na, d);
  });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("autodiff: hcat of nothing");
  Eigen::Index cols = 0;
  Tape* t = nullptr;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw std::invalid_argument("autodiff: hcat row mismatch");
    cols += p.cols();
    if (p.recorded()) t = p.tape;
  }
  Mat v(parts[0].rows(), cols);
  Eigen::Index at = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.val();
    at += p.cols();
    ids.push_back(p.node);
    widths.push_back(p.cols());
  }
  if (!t) return make(nullptr, std::move(v), {});
  return make(t, std::move(v), [t, ids, widths](const Mat& g) {
    Eigen::Index c = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t->accumulate(ids[i], Mat(g.middleCols(c, widths[i])));
      c += widths[i];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("autodiff: concat_rows of nothing");
  Eigen::Index rows = 0;
  Tape* t = nullptr;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols())
      throw std::invalid_argument("autodiff: concat_rows column mismatch");
    rows += p.rows();
    if (p.recorded()) t = p.tape;
  }
  Mat v(rows, parts[0].cols());
  Eigen::Index at = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.val();
    at += p.rows();
    ids.push_back(p.node);
    heights.push_back(p.rows());
  }
  if (!t) return make(nullptr, std::move(v), {});
  return make(t, std::move(v), [t, ids, heights](const Mat& g) {
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t->accumulate(ids[i], Mat(g.middleRows(r, heights[i])));
      r += heights[i];
    }
  });
}

Var gather_rows(const Var& a, std::vector<int> index) {
  Mat v(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows())
      throw std::invalid_argument("autodiff: gather_rows index out of range");
    v.row(static_cast<Eigen::Index>(i)) = a.val().row(index[i]);
  }
  Tape* t = tape_of(a);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  const Eigen::Index rows = a.rows(), cols = a.cols();
  auto idx = std::make_shared<const std::vector<int>>(std::move(index));
  return make(t, std::move(v), [t, na, idx, rows, cols](const Mat& g) {
    Mat d = Mat::Zero(rows, cols);
    for (std::size_t i = 0; i < idx->size(); ++i)
      d.row((*idx)[i]) += g.row(static_cast<Eigen::Index>(i));
    t->accumulate(na, d);
  });
}

namespace {
Mat reshape_rm(const Mat& m, Eigen::Index rows, Eigen::Index cols) {
  Mat out(rows, cols);
  const Eigen::Index c0 = m.cols();
  for (Eigen::Index k = 0; k < rows * cols; ++k)
    out(k / cols, k % cols) = m(k / c0, k % c0);
  return out;
}
}  // namespace

Var reshape_rowmajor(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.rows() * a.cols())
    throw std::invalid_argument("autodiff: reshape element count mismatch");
  Tape* t = tape_of(a);
  Mat v = reshape_rm(a.val(), rows, cols);
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return make(t, std::move(v), [t, na, r0, c0](const Mat& g) {
    t->accumulate(na, reshape_rm(g, r0, c0));
  });
}

Var sum_all(const Var& a) {
  Tape* t = tape_of(a);
  Mat v = Mat::Constant(1, 1, a.val().sum());
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make(t, std::move(v), [t, na, rows, cols](const Mat& g) {
    t->accumulate(na, Mat(Mat::Constant(rows, cols, g(0, 0))));
  });
}

Var colsum(const Var& a) {
  Tape* t = tape_of(a);
  Mat v = a.val().colwise().sum();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  const Eigen::Index rows = a.rows();
  return make(t, std::move(v), [t, na, rows](const Mat& g) {
    t->accumulate(na, Mat(g.replicate(rows, 1)));
  });
}

Var rownorm(const Var& a) {
  Tape* t = tape_of(a);
  Mat v = a.val().rowwise().norm();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node;
  auto av = a.value;
  auto nv = share(Mat(v));
  return make(t, std::move(v), [t, na, av, nv](const Mat& g) {
    Mat d(av->rows(), av->cols());
    for (Eigen::Index r = 0; r < av->rows(); ++r) {
      const double n = (*nv)(r, 0);
      d.row(r) = n > 0.0 ? Eigen::RowVectorXd(g(r, 0) / n * av->row(r))
                         : Eigen::RowVectorXd::Zero(av->cols());
    }
    t->accumulate(na, d);
  });
}

Var mul_scalar_var(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("autodiff: scalar must be 1x1");
  Tape* t = tape_of(a, s);
  Mat v = s.scalar() * a.val();
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, ns = s.node;
  auto av = a.value;
  const double sv = s.scalar();
  return make(t, std::move(v), [t, na, ns, av, sv](const Mat& g) {
    if (na >= 0) t->accumulate(na, Mat(sv * g));
    if (ns >= 0) t->accumulate(ns, Mat(Mat::Constant(1, 1, g.cwiseProduct(*av).sum())));
  });
}

Var div_scalar_var(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("autodiff: scalar must be 1x1");
  const double sv = s.scalar();
  if (sv == 0.0) throw std::invalid_argument("autodiff: division by zero scalar");
  Tape* t = tape_of(a, s);
  Mat v = a.val() / sv;
  if (!t) return make(nullptr, std::move(v), {});
  const int na = a.node, ns = s.node;
  auto av = a.value;
  return make(t, std::move(v), [t, na, ns, av, sv](const Mat& g) {
    if (na >= 0) t->accumulate(na, Mat(g / sv));
    if (ns >= 0)
      t->accumulate(ns, Mat(Mat::Constant(1, 1, -g.cwiseProduct(*av).sum() / (sv * sv))));
  });
}

}  // namespace poseseq::ad
