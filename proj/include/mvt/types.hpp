#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Eigen::Index;

// Linear predictors are clipped to this range before expit/softmax.
inline constexpr double kLinPredBound = 30.0;

// Probability floor applied by predict_proba.
inline constexpr double kProbClamp = 1e-12;

// Outcome predictions are kept inside these bounds so logit stays finite.
inline constexpr double kFluctuationBound = 5e-4;

inline double expit(double t) {
  t = std::clamp(t, -kLinPredBound, kLinPredBound);
  return 1.0 / (1.0 + std::exp(-t));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clamp_prob(double p, double lo = kProbClamp) {
  return std::clamp(p, lo, 1.0 - lo);
}

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& msg, double grad_norm)
      : Error(msg), gradient_norm(grad_norm) {}
  double gradient_norm;
};

}  // namespace mvt
