#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

namespace poseseq {

// Adaptive-moment optimizer with optional decoupled weight decay. State is
// keyed by parameter name; a fresh instance carries no history.
class AdamOptimizer {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void step(std::map<std::string, Eigen::MatrixXd>& params,
            const std::map<std::string, Eigen::MatrixXd>& grads, double lr);

 private:
  std::map<std::string, Eigen::MatrixXd> m_, v_;
  long t_ = 0;
};

}  // namespace poseseq
