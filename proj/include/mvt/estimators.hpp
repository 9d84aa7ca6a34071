#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvt/dataset.hpp"
#include "mvt/super_learner.hpp"
#include "mvt/types.hpp"

namespace mvt {

enum class PropensitySource { Multinomial, BinomialPerLevel };

// n x J matrix of estimated treatment probabilities. Multinomial-source rows
// sum to one; binomial-source rows are unconstrained.
struct PropensityMatrix {
  Matrix probs;
  PropensitySource source = PropensitySource::Multinomial;
  void validate() const;
};

struct WinsorConfig {
  double lower = 0.005;
  double upper = 0.995;
  void check() const;
};

// Clamp entries into [lower, upper]; multinomial-source rows are renormalized
// to sum one afterwards, binomial-source rows are left as clamped.
PropensityMatrix winsorize(const PropensityMatrix& pm, const WinsorConfig& cfg);

struct NuisanceFits {
  PropensityMatrix propensities;  // post-winsorization
  Matrix initial_outcome;         // n x J, entries inside fluctuation bounds
  Vector observed_pred;           // initial_outcome(i, a_i - 1)
};

// mu_j = mean_i initial_outcome(i, j)
Vector g_computation(const NuisanceFits& nf);

// mu_j = (1/n) sum_i 1(a_i = j) y_i / p_j(x_i)
Vector iptw(const Dataset& d, const PropensityMatrix& pm);

struct FluctuationFit {
  // multinomial: epsilons is J x 1. binomial: J x 2 with per-level pairs
  // (eps_j, eps_not_j); the counterfactual update for level j uses column 0.
  Matrix epsilons;
  bool converged = false;
  double score_norm = 0.0;
};

// Logistic fluctuation of the initial outcome model: J clever covariates
// 1(a_i = j)/p_j(x_i), offset logit(observed prediction), no intercept,
// solved by Newton with step-halving. At convergence every per-level score
// sum is within 1e-8 of zero.
FluctuationFit tmle_fluctuate_multinomial(const Dataset& d,
                                          const NuisanceFits& nf);

// Per-level two-covariate fluctuation (clever covariates 1(a=j)/p_j and
// 1(a!=j)/(1-p_j)); expects binomial-source propensities.
FluctuationFit tmle_fluctuate_binomial(const Dataset& d, const NuisanceFits& nf);

// n x J matrix of updated predictions: expit(logit(e0_j) + eps_j / p_j),
// with the treatment indicator set to one for every observation.
Matrix tmle_update(const NuisanceFits& nf, const FluctuationFit& fit);

// column means of tmle_update
Vector tmle_estimate(const Dataset& d, const NuisanceFits& nf,
                     const FluctuationFit& fit);

// Efficient influence curve for the (ref, alt) contrast. outcome_pred is the
// updated matrix for TMLE and the initial matrix for IPTW / G-computation;
// levels are 1-based.
Vector influence_curve(const Dataset& d, const Matrix& outcome_pred,
                       const PropensityMatrix& pm, int ref, int alt,
                       double ate);

struct WaldInterval {
  double se;
  double lo;
  double hi;
};

// se = sqrt(mean(IC^2) / n); interval = ate +/- 1.96 se
WaldInterval wald_interval(const Vector& ic, double ate);

enum class EstimatorKind {
  TmleMultinomial,
  TmleBinomial,
  IptwMultinomial,
  IptwBinomial,
  GComputation,
};

std::string estimator_name(EstimatorKind k);
EstimatorKind estimator_from_name(const std::string& name);

struct EstimateRow {
  int ref_level;
  int alt_level;
  double mu_ref;
  double mu_alt;
  double ate;
  double se;
  double ci_lo;
  double ci_hi;
};

struct EstimateTable {
  EstimatorKind estimator;
  int n = 0;
  std::vector<EstimateRow> rows;
};

enum class LearnerLibrary { Glm, SlDesk, SlFull };

std::vector<LearnerSpec> learner_library(LearnerLibrary lib, int class_count);

struct EstimationConfig {
  EstimatorKind estimator = EstimatorKind::TmleMultinomial;
  LearnerLibrary library = LearnerLibrary::Glm;
  int folds = 5;
  std::optional<int> reference;          // 1-based; J-1 contrasts when set
  std::optional<WinsorConfig> winsor;    // propensity winsorization
  std::uint64_t seed = 0;
  // column subsets used when fitting (misspecification studies); empty means
  // all columns
  std::vector<int> outcome_cols;
  std::vector<int> treatment_cols;
};

// Fitted nuisance models plus the matrices the estimators consume. Outcome
// models are fit separately within each treatment arm; propensities come from
// one multinomial model or J one-vs-rest binomial models.
struct FittedNuisance {
  Matrix initial_outcome;                       // n x J, clamped
  std::optional<PropensityMatrix> multinomial;  // raw (pre-winsorization)
  std::optional<PropensityMatrix> binomial;
  std::vector<Ensemble> outcome_models;  // per arm
  std::optional<Ensemble> treatment_multinomial;
  std::vector<Ensemble> treatment_binomial;  // per level
};

struct NuisanceRequest {
  bool need_multinomial = false;
  bool need_binomial = false;
};

FittedNuisance fit_nuisance(const Dataset& d, const EstimationConfig& cfg,
                            const NuisanceRequest& req);

// diagnostics path: fits only the requested treatment model(s)
FittedNuisance fit_nuisance_treatment_only(const Dataset& d,
                                           const EstimationConfig& cfg,
                                           const NuisanceRequest& req);

NuisanceFits assemble_nuisance(const Dataset& d, const FittedNuisance& fits,
                               PropensitySource source,
                               const std::optional<WinsorConfig>& winsor);

// one row per pair: all J(J-1)/2 unordered pairs, or J-1 contrasts against
// cfg.reference when given
EstimateTable estimate_all_pairs(const Dataset& d, const EstimationConfig& cfg);

// estimator core once nuisances are available (shared with the simulation
// driver, which reuses one nuisance fit across estimators)
EstimateTable estimate_pairs_from_nuisance(const Dataset& d,
                                           EstimatorKind estimator,
                                           const NuisanceFits& nf,
                                           std::optional<int> reference);

}  // namespace mvt
