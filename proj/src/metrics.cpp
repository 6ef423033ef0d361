#include "poseseq/metrics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "poseseq/kinematics.hpp"

namespace poseseq {

namespace {

using Mat3 = Eigen::Matrix3d;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

void check_shapes(const PoseSequence& pred, const PoseSequence& gt, const char* op) {
  if (pred.frame_count() != gt.frame_count() || pred.joint_count() != gt.joint_count())
    throw std::invalid_argument(std::string(op) + ": shape mismatch between pred and gt");
}

MatX3 frame_of(const PoseSequence& s, int t, bool root_relative) {
  MatX3 f = s.frame(t);
  if (root_relative) f.rowwise() -= s.joint(t, s.topology->root());
  return f;
}

// Similarity-aligned copy of x onto y: rotation R, uniform scale s and
// translation minimizing sum ||s R x_i + t - y_i||^2. With centered point
// sets and H = xc^T yc = U S V^T, the optimizer is R = V D U^T with
// D = diag(1, 1, det(VU^T)), s = tr(S D) / ||xc||^2, t = centroid match.
MatX3 procrustes_align(const MatX3& x, const MatX3& y, bool& degenerate) {
  const Eigen::RowVector3d mx = x.colwise().mean();
  const Eigen::RowVector3d my = y.colwise().mean();
  const MatX3 xc = x.rowwise() - mx;
  const MatX3 yc = y.rowwise() - my;
  const double xnorm2 = xc.squaredNorm();
  if (xnorm2 <= 0.0) {
    degenerate = true;
    return x;
  }
  degenerate = false;
  const Mat3 h = xc.transpose() * yc;
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 rot = svd.matrixV() * d * svd.matrixU().transpose();
  const double scale = (svd.singularValues().asDiagonal().toDenseMatrix() * d).trace() / xnorm2;
  MatX3 aligned = scale * (xc * rot.transpose());
  aligned.rowwise() += my;
  return aligned;
}

}  // namespace

double mpjpe(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& opt) {
  check_shapes(pred, gt, "mpjpe");
  double sum = 0.0;
  long count = 0;
  for (int t = 0; t < gt.frame_count(); ++t) {
    if (!gt.valid[static_cast<std::size_t>(t)]) continue;
    const MatX3 dp = frame_of(pred, t, opt.root_relative) - frame_of(gt, t, opt.root_relative);
    sum += dp.rowwise().norm().sum();
    count += dp.rows();
  }
  if (count == 0) throw std::invalid_argument("mpjpe: no valid ground-truth frames");
  return 1000.0 * sum / static_cast<double>(count);
}

double pa_mpjpe(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& opt) {
  check_shapes(pred, gt, "pa_mpjpe");
  if (gt.joint_count() < 3)
    throw std::invalid_argument("pa_mpjpe: at least 3 joints required for alignment");

  if (opt.sequence_level_pa) {
    MatX3 px(static_cast<Eigen::Index>(gt.valid_count()) * gt.joint_count(), 3);
    MatX3 gx(px.rows(), 3);
    Eigen::Index at = 0;
    for (int t = 0; t < gt.frame_count(); ++t) {
      if (!gt.valid[static_cast<std::size_t>(t)]) continue;
      px.middleRows(at, gt.joint_count()) = pred.frame(t);
      gx.middleRows(at, gt.joint_count()) = gt.frame(t);
      at += gt.joint_count();
    }
    if (at == 0) throw std::invalid_argument("pa_mpjpe: no valid ground-truth frames");
    bool degenerate = false;
    const MatX3 aligned = procrustes_align(px, gx, degenerate);
    if (degenerate) throw std::invalid_argument("pa_mpjpe: degenerate prediction");
    return 1000.0 * (aligned - gx).rowwise().norm().mean();
  }

  double sum = 0.0;
  long frames = 0;
  for (int t = 0; t < gt.frame_count(); ++t) {
    if (!gt.valid[static_cast<std::size_t>(t)]) continue;
    bool degenerate = false;
    const MatX3 p = pred.frame(t);
    const MatX3 g = gt.frame(t);
    const MatX3 aligned = procrustes_align(p, g, degenerate);
    if (degenerate) {
      std::cerr << "warning: pa_mpjpe skipping degenerate frame " << t << "\n";
      continue;
    }
    sum += (aligned - g).rowwise().norm().mean();
    ++frames;
  }
  if (frames == 0) throw std::invalid_argument("pa_mpjpe: no alignable frames");
  return 1000.0 * sum / static_cast<double>(frames);
}

double accel_error(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& opt) {
  check_shapes(pred, gt, "accel_error");
  const int T = gt.frame_count();
  if (T < 3) throw std::invalid_argument("accel_error: at least 3 frames required");
  const int J = gt.joint_count();
  double sum = 0.0;
  long count = 0;
  for (int t = 0; t + 2 < T; ++t) {
    if (!gt.valid[static_cast<std::size_t>(t)] || !gt.valid[static_cast<std::size_t>(t + 1)] ||
        !gt.valid[static_cast<std::size_t>(t + 2)])
      continue;
    for (int j = 0; j < J; ++j) {
      const Eigen::RowVector3d ap =
          pred.joint(t + 2, j) - 2.0 * pred.joint(t + 1, j) + pred.joint(t, j);
      const Eigen::RowVector3d ag =
          gt.joint(t + 2, j) - 2.0 * gt.joint(t + 1, j) + gt.joint(t, j);
      sum += (ap - ag).norm();
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("accel_error: no valid frame triplets");
  double v = 1000.0 * sum / static_cast<double>(count);
  if (opt.accel_per_second) v *= gt.fps * gt.fps;
  return v;
}

EvalReport evaluate(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& opt) {
  EvalReport r;
  r.mpjpe_mm = mpjpe(pred, gt, opt);
  r.pa_mpjpe_mm = pa_mpjpe(pred, gt, opt);
  r.accel_mm = accel_error(pred, gt, opt);
  r.per_frame_mpjpe_mm.assign(static_cast<std::size_t>(gt.frame_count()),
                              std::numeric_limits<double>::quiet_NaN());
  r.frames_evaluated = 0;
  for (int t = 0; t < gt.frame_count(); ++t) {
    if (!gt.valid[static_cast<std::size_t>(t)]) continue;
    const MatX3 dp = frame_of(pred, t, opt.root_relative) - frame_of(gt, t, opt.root_relative);
    r.per_frame_mpjpe_mm[static_cast<std::size_t>(t)] = 1000.0 * dp.rowwise().norm().mean();
    ++r.frames_evaluated;
  }
  return r;
}

std::string EvalReport::to_text() const {
  std::ostringstream ss;
  ss << "mpjpe_mm: " << mpjpe_mm << "\n"
     << "pa_mpjpe_mm: " << pa_mpjpe_mm << "\n"
     << "accel_mm: " << accel_mm << "\n"
     << "frames_evaluated: " << frames_evaluated << "\n";
  return ss.str();
}

std::string EvalReport::csv_header() { return "mpjpe_mm,pa_mpjpe_mm,accel_mm,frames_evaluated"; }

std::string EvalReport::to_csv_row() const {
  std::ostringstream ss;
  ss << mpjpe_mm << ',' << pa_mpjpe_mm << ',' << accel_mm << ',' << frames_evaluated;
  return ss.str();
}

}  // namespace poseseq
