#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvt/types.hpp"

namespace mvt {

enum class LearnerKind { BinomialGlm, MultinomialGlm, ElasticNet, GradBoost };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::BinomialGlm;
  double alpha = 1.0;          // elastic net: l1 share in [0,1]
  int trees = 100;             // boosting rounds
  int depth = 3;
  double learning_rate = 0.1;
  int max_iter = 100;
  double tol = 1e-10;          // gradient inf-norm target for GLM solvers
  int path_length = 50;        // elastic net: lambda grid size

  std::string name() const;
  void check() const;

  static LearnerSpec binomial_glm();
  static LearnerSpec multinomial_glm();
  static LearnerSpec elastic_net(double alpha);
  static LearnerSpec grad_boost(int trees = 100, int depth = 3,
                                double learning_rate = 0.1);
};

// Per-column affine transform fit on training data. Columns whose observed
// values are all in {0,1} are left untouched.
struct Standardization {
  Vector mean;
  Vector scale;  // sd; 1 for binary / constant columns
  Matrix apply(const Matrix& X) const;
};

Standardization fit_standardization(const Matrix& X);

// Axis-aligned regression tree stored as a flat node array.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};
using Tree = std::vector<TreeNode>;

struct FittedLearner {
  LearnerSpec spec;
  int class_count = 2;
  Standardization standardization;

  // GLM / elastic net: (p+1) x K coefficient matrix, intercept in row 0.
  // Multinomial GLM keeps class 1 as reference (column 0 all zero).
  Matrix coef;

  // boosting: rounds x class trees, plus per-class base score
  std::vector<std::vector<Tree>> rounds;
  Vector base_score;

  double chosen_lambda = std::numeric_limits<double>::quiet_NaN();
  bool constant_labels = false;

  // NLL per accepted Newton/IRLS iteration (GLM kinds only)
  std::vector<double> nll_path;
};

// n x K probability matrix; rows sum to 1 for multinomial kinds, entries
// clamped to [1e-12, 1-1e-12]. K = 2 for binomial learners.
Matrix predict_proba(const FittedLearner& m, const Matrix& X);

FittedLearner fit_binomial_glm(const Matrix& X, const Vector& y,
                               const LearnerSpec& spec);

// labels in 1..J; class 1 is the softmax reference.
FittedLearner fit_multinomial_glm(const Matrix& X, const IntVector& labels,
                                  int class_count, const LearnerSpec& spec);

// labels in 1..K. K = 2 runs penalized IRLS coordinate descent; K > 2 runs
// proximal gradient with per-feature grouped soft-thresholding. Lambda is
// picked by internal 5-fold cross-validated NLL over the grid (descending);
// an empty grid requests the default 50-value path from lambda_max down to
// 1e-4 * lambda_max.
FittedLearner fit_elastic_net(const Matrix& X, const IntVector& labels,
                              int class_count, const LearnerSpec& spec,
                              std::vector<double> lambda_grid = {});

FittedLearner fit_gradboost(const Matrix& X, const IntVector& labels,
                            int class_count, const LearnerSpec& spec);

// dispatch on spec.kind; y/labels given as 1..K
FittedLearner fit_learner(const LearnerSpec& spec, const Matrix& X,
                          const IntVector& labels, int class_count);

// Mean negative log-likelihood of labels (1..K) under a probability matrix.
double mean_nll(const Matrix& probs, const IntVector& labels);

// NLL and gradients for the unpenalized GLMs, exposed for verification.
// Design matrices already carry the intercept column.
double binomial_nll(const Matrix& Z, const Vector& y, const Vector& beta);
Vector binomial_nll_gradient(const Matrix& Z, const Vector& y, const Vector& beta);
// B is (p+1) x (K-1), reference class dropped; returns gradient of same shape.
double multinomial_nll(const Matrix& Z, const IntVector& labels, const Matrix& B);
Matrix multinomial_nll_gradient(const Matrix& Z, const IntVector& labels,
                                const Matrix& B);

void to_json(nlohmann::json& j, const FittedLearner& m);

}  // namespace mvt
