#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvt/learners.hpp"
#include "mvt/types.hpp"

namespace mvt {

struct FoldAssignment {
  std::vector<int> fold_of;  // values in 1..folds
  int folds = 5;
  bool stratified = true;  // false when a class was too small and we fell back
};

// Stratified random partition, deterministic given seed. Falls back to an
// unstratified partition (stratified=false) when some class has fewer than V
// members.
FoldAssignment make_folds(int n, const IntVector& labels, int V,
                          std::uint64_t seed);

struct CvPredictions {
  std::vector<Matrix> out_of_fold;      // one n x K matrix per kept member
  std::vector<double> member_nll;       // CV NLL per kept member
  std::vector<LearnerSpec> kept_specs;
  std::vector<std::string> dropped;     // names of members that failed a fold
};

// Out-of-fold probability predictions per member; a member failing on any
// fold is dropped (error only if every member fails).
CvPredictions cv_predictions(const std::vector<LearnerSpec>& specs,
                             const Matrix& X, const IntVector& labels,
                             int class_count, const FoldAssignment& folds);

// Minimizes the NLL of the convex combination over the probability simplex
// by exponentiated-gradient descent (objective change <= 1e-10 or 5000
// iterations); the returned point is never worse than the best vertex.
Vector optimize_weights(const std::vector<Matrix>& out_of_fold,
                        const IntVector& labels);

struct Ensemble {
  std::vector<FittedLearner> members;  // refit on the full data
  std::vector<std::string> member_names;
  Vector weights;                  // simplex
  Vector cv_nll_per_member;
  double cv_nll_ensemble = 0.0;
  bool fold_warning = false;
  std::vector<std::string> dropped;
};

enum class SlTarget { BinomialOutcome, MultinomialTreatment };

Ensemble fit_super_learner(const std::vector<LearnerSpec>& specs,
                           const Matrix& X, const IntVector& labels,
                           int class_count, int V, std::uint64_t seed);

Matrix predict_proba(const Ensemble& e, const Matrix& X);

}  // namespace mvt
