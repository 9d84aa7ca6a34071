#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvt/dataset.hpp"
#include "mvt/estimators.hpp"
#include "mvt/rng.hpp"
#include "mvt/types.hpp"

namespace mvt {

enum class Overlap { Adequate, Inadequate, Rct };
enum class EventRate { Low, Moderate, NoEffect };
enum class CovariateRegime { Standard6, HighDim40, HighDim100, ThreeLevel };
enum class Misspec { None, OmitX6Outcome, OmitX6Treatment, OmitX6Both };

std::string overlap_name(Overlap o);
std::string event_rate_name(EventRate e);
std::string regime_name(CovariateRegime r);
std::string misspec_name(Misspec m);
Overlap overlap_from_name(const std::string& s);
EventRate event_rate_from_name(const std::string& s);
CovariateRegime regime_from_name(const std::string& s);
Misspec misspec_from_name(const std::string& s);

// covariate count implied by the regime
int regime_covariates(CovariateRegime r);
// treatment level count implied by the regime (0 = caller chooses)
int regime_levels(CovariateRegime r);

// x1..x3 ~ MVN(0, [[2,1,-1],[1,1,-.5],[-1,-.5,1]]), x4 ~ U[-3,3],
// x5 ~ chi^2_1, x6 ~ Bernoulli(.5)
Matrix gen_covariates_6(int n, Rng& rng);

// first six columns as gen_covariates_6; columns 7..p cycle through
// standardized truncated exponential / geometric / hypergeometric /
// logistic / Poisson draws
Matrix gen_covariates_highdim(int n, int p, Rng& rng);

// (p+1) x J coefficient matrices (intercept row first)
Matrix treatment_coefficients(Overlap overlap, CovariateRegime regime);
Matrix outcome_coefficients(EventRate rate, CovariateRegime regime);

// softmax probabilities of the treatment model
Matrix treatment_probabilities(const Matrix& X, const Matrix& beta);

IntVector gen_treatment(const Matrix& X, Overlap overlap, int J, Rng& rng);

// potential outcome draws y_i(j) ~ Bern(expit(x_i' gamma_j + 1)); the
// indicator is set to one because column j is the outcome under assignment
// to j
Matrix gen_potential_outcomes(const Matrix& X, EventRate rate, int J, Rng& rng);

struct SimulatedData {
  Dataset data;
  Matrix true_probs;          // n x J treatment probabilities
  Matrix potential_outcomes;  // n x J binary
  Vector true_mu;             // column means of potential_outcomes
};

struct ScenarioConfig {
  int levels = 6;
  int n = 2000;
  int replications = 200;
  Overlap overlap = Overlap::Adequate;
  EventRate event_rate = EventRate::Low;
  CovariateRegime regime = CovariateRegime::Standard6;
  Misspec misspec = Misspec::None;
  std::vector<EstimatorKind> estimators;
  LearnerLibrary library = LearnerLibrary::Glm;
  int folds = 5;
  std::optional<WinsorConfig> winsor;  // off by default in simulations
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0 = hardware concurrency

  void check() const;
};

SimulatedData gen_scenario(const ScenarioConfig& cfg, std::uint64_t seed);

// Appendix-style J=3 generator (three-level coefficient grid)
SimulatedData gen_scenario_3(int n, Overlap overlap, EventRate rate, Rng& rng);

// covariate column subsets (0-based) for the outcome / treatment designs
struct MisspecColumns {
  std::vector<int> outcome_cols;
  std::vector<int> treatment_cols;
};
MisspecColumns apply_misspecification(Misspec m, CovariateRegime regime, int p);

struct PairMetrics {
  int ref_level, alt_level;
  double mean_abs_bias;
  double coverage;
  double mean_ci_width;
  double rel_precision;  // var(reference TMLE-multinomial GLM) / var(this)
  int replications_used;
};

struct EstimatorSummary {
  EstimatorKind estimator;
  std::vector<PairMetrics> pairs;
  double avg_abs_bias;
  double avg_coverage;
  double avg_ci_width;
  double avg_rel_precision;
  int failures;
};

struct RawEstimate {
  int replication;  // 1-based
  EstimatorKind estimator;
  int ref_level, alt_level;
  double ate, se, ci_lo, ci_hi, true_ate;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<EstimatorSummary> estimators;
  std::vector<RawEstimate> raw;
  int failed_replications = 0;      // replications with any failed estimator
  double max_failure_fraction = 0;  // worst per-estimator failure share
  // treatment-model diagnostics averaged over replications and levels
  double prob_error_multinomial = 0, prob_error_binomial = 0;
  double ess_ratio_multinomial = 0, ess_ratio_binomial = 0;
};

ScenarioResult run_scenario(const ScenarioConfig& cfg);

}  // namespace mvt
