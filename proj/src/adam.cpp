#include "poseseq/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace poseseq {

void AdamOptimizer::step(std::map<std::string, Eigen::MatrixXd>& params,
                         const std::map<std::string, Eigen::MatrixXd>& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, t_);
  const double bc2 = 1.0 - std::pow(beta2, t_);
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;  // parameter untouched this step
    const Eigen::MatrixXd& g = git->second;
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw std::invalid_argument("adam: gradient shape mismatch for " + name);
    auto& m = m_.try_emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols())).first->second;
    auto& v = v_.try_emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols())).first->second;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;  // keep parameters bitwise untouched
    const Eigen::MatrixXd update =
        (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
    if (weight_decay != 0.0)
      p -= lr * (update + weight_decay * p);
    else
      p -= lr * update;
  }
}

}  // namespace poseseq
