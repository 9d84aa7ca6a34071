#include "mvt/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "mvt/rng.hpp"

namespace mvt {

void PropensityMatrix::validate() const {
  if (!(probs.array() > 0.0).all() || !(probs.array() < 1.0).all())
    throw Error("propensity entries must lie in (0,1)");
  if (source == PropensitySource::Multinomial) {
    const Vector sums = probs.rowwise().sum();
    if (((sums.array() - 1.0).abs() > 1e-8).any())
      throw Error("multinomial propensity rows must sum to 1");
  }
}

void WinsorConfig::check() const {
  if (!(0.0 < lower && lower < upper && upper < 1.0))
    throw Error("winsor bounds must satisfy 0 < lower < upper < 1");
}

PropensityMatrix winsorize(const PropensityMatrix& pm, const WinsorConfig& cfg) {
  cfg.check();
  PropensityMatrix out = pm;
  for (Index i = 0; i < out.probs.rows(); ++i) {
    bool touched = false;
    for (Index j = 0; j < out.probs.cols(); ++j) {
      const double clamped = std::clamp(out.probs(i, j), cfg.lower, cfg.upper);
      if (clamped != out.probs(i, j)) {
        out.probs(i, j) = clamped;
        touched = true;
      }
    }
    // untouched rows stay bit-identical
    if (touched && pm.source == PropensitySource::Multinomial)
      out.probs.row(i) /= out.probs.row(i).sum();
  }
  return out;
}

Vector g_computation(const NuisanceFits& nf) {
  return nf.initial_outcome.colwise().mean();
}

Vector iptw(const Dataset& d, const PropensityMatrix& pm) {
  const int n = d.n();
  const int J = d.level_count;
  Vector mu = Vector::Zero(J);
  for (int i = 0; i < n; ++i) {
    const int j = d.treatments[i] - 1;
    const double p = pm.probs(i, j);
    if (!(p > 0.0)) throw Error("iptw: zero propensity at row " + std::to_string(i + 1));
    mu[j] += d.outcomes[i] / p;
  }
  return mu / static_cast<double>(n);
}

namespace {

constexpr double kScoreTol = 1e-10;
constexpr int kFluctuationMaxIter = 100;

// Newton with step-halving for a single fluctuation coefficient: solves
// sum_k h_k (y_k - expit(off_k + eps h_k)) = 0, which is monotone in eps.
struct ScalarFluctuation {
  std::vector<double> h, off, y;

  double score(double eps) const {
    double s = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k)
      s += h[k] * (y[k] - expit(off[k] + eps * h[k]));
    return s;
  }

  // negative log-likelihood of the offset logistic model, for step control
  double nll(double eps) const {
    double v = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const double eta = std::clamp(off[k] + eps * h[k], -kLinPredBound, kLinPredBound);
      v += std::log1p(std::exp(-std::abs(eta))) +
           (eta > 0 ? (1.0 - y[k]) * eta : -y[k] * eta);
    }
    return v;
  }

  // returns (eps, converged, |score|)
  std::tuple<double, bool, double> solve() const {
    if (h.empty()) return {0.0, true, 0.0};
    double eps = 0.0;
    double cur_nll = nll(eps);
    double s = score(eps);
    for (int iter = 0; iter < kFluctuationMaxIter; ++iter) {
      if (std::abs(s) <= kScoreTol) return {eps, true, std::abs(s)};
      double fisher = 0.0;
      for (std::size_t k = 0; k < h.size(); ++k) {
        const double p = expit(off[k] + eps * h[k]);
        fisher += h[k] * h[k] * std::max(p * (1.0 - p), 1e-12);
      }
      double step = s / fisher;  // ascent on log-likelihood
      bool moved = false;
      for (int half = 0; half < 50; ++half) {
        const double cand = eps + step;
        const double cand_nll = nll(cand);
        if (cand_nll <= cur_nll + 1e-13 * (1.0 + std::abs(cur_nll))) {
          eps = cand;
          cur_nll = cand_nll;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      s = score(eps);
    }
    return {eps, std::abs(s) <= 1e-8, std::abs(s)};
  }
};

void check_nuisance(const NuisanceFits& nf, const Dataset& d) {
  if (nf.initial_outcome.rows() != d.n() || nf.initial_outcome.cols() != d.level_count)
    throw Error("nuisance outcome matrix has wrong shape");
  if (nf.propensities.probs.rows() != d.n() ||
      nf.propensities.probs.cols() != d.level_count)
    throw Error("propensity matrix has wrong shape");
  if ((nf.initial_outcome.array() <= 0.0).any() ||
      (nf.initial_outcome.array() >= 1.0).any())
    throw Error("initial outcome predictions must be strictly inside (0,1)");
}

}  // namespace

FluctuationFit tmle_fluctuate_multinomial(const Dataset& d,
                                          const NuisanceFits& nf) {
  check_nuisance(nf, d);
  const int J = d.level_count;

  // The J score equations of the joint no-intercept logistic regression are
  // separable: observation i only carries the clever covariate of its own
  // arm, so the Newton system is diagonal and each eps_j solves a monotone
  // one-dimensional problem.
  FluctuationFit fit;
  fit.epsilons = Matrix::Zero(J, 1);
  fit.converged = true;
  fit.score_norm = 0.0;
  for (int j = 0; j < J; ++j) {
    ScalarFluctuation f;
    for (int i = 0; i < d.n(); ++i) {
      if (d.treatments[i] - 1 != j) continue;
      f.h.push_back(1.0 / nf.propensities.probs(i, j));
      f.off.push_back(logit(nf.observed_pred[i]));
      f.y.push_back(d.outcomes[i]);
    }
    auto [eps, conv, score] = f.solve();
    fit.epsilons(j, 0) = eps;
    fit.converged = fit.converged && conv;
    fit.score_norm = std::max(fit.score_norm, score);
  }
  if (!fit.converged)
    throw NonConvergenceError(
        "multinomial fluctuation did not converge, score norm " +
            std::to_string(fit.score_norm),
        fit.score_norm);
  return fit;
}

FluctuationFit tmle_fluctuate_binomial(const Dataset& d, const NuisanceFits& nf) {
  check_nuisance(nf, d);
  const int J = d.level_count;

  FluctuationFit fit;
  fit.epsilons = Matrix::Zero(J, 2);
  fit.converged = true;
  fit.score_norm = 0.0;
  for (int j = 0; j < J; ++j) {
    // The two score equations also separate: eps_j loads on a_i = j rows,
    // eps_{-j} on the rest with weight 1/(1 - p_j).
    ScalarFluctuation fj, fnj;
    for (int i = 0; i < d.n(); ++i) {
      const double pj = nf.propensities.probs(i, j);
      if (d.treatments[i] - 1 == j) {
        fj.h.push_back(1.0 / pj);
        fj.off.push_back(logit(nf.observed_pred[i]));
        fj.y.push_back(d.outcomes[i]);
      } else {
        const double pnj = 1.0 - pj;
        if (!(pnj > 0.0)) throw Error("binomial fluctuation: 1 - p_j vanished");
        fnj.h.push_back(1.0 / pnj);
        fnj.off.push_back(logit(nf.observed_pred[i]));
        fnj.y.push_back(d.outcomes[i]);
      }
    }
    auto [ej, cj, sj] = fj.solve();
    auto [enj, cnj, snj] = fnj.solve();
    fit.epsilons(j, 0) = ej;
    fit.epsilons(j, 1) = enj;
    fit.converged = fit.converged && cj && cnj;
    fit.score_norm = std::max({fit.score_norm, sj, snj});
  }
  if (!fit.converged)
    throw NonConvergenceError(
        "binomial fluctuation did not converge, score norm " +
            std::to_string(fit.score_norm),
        fit.score_norm);
  return fit;
}

Matrix tmle_update(const NuisanceFits& nf, const FluctuationFit& fit) {
  const Index n = nf.initial_outcome.rows();
  const Index J = nf.initial_outcome.cols();
  Matrix updated(n, J);
  for (Index j = 0; j < J; ++j) {
    const double eps = fit.epsilons(j, 0);
    for (Index i = 0; i < n; ++i) {
      const double off = logit(nf.initial_outcome(i, j));
      updated(i, j) = expit(off + eps / nf.propensities.probs(i, j));
    }
  }
  return updated;
}

Vector tmle_estimate(const Dataset& d, const NuisanceFits& nf,
                     const FluctuationFit& fit) {
  (void)d;
  return tmle_update(nf, fit).colwise().mean();
}

Vector influence_curve(const Dataset& d, const Matrix& outcome_pred,
                       const PropensityMatrix& pm, int ref, int alt,
                       double ate) {
  const int n = d.n();
  Vector ic(n);
  for (int i = 0; i < n; ++i) {
    const int a = d.treatments[i] - 1;
    double resid_weight = 0.0;
    if (a == alt - 1) resid_weight = 1.0 / pm.probs(i, alt - 1);
    if (a == ref - 1) resid_weight = -1.0 / pm.probs(i, ref - 1);
    const double resid = resid_weight * (d.outcomes[i] - outcome_pred(i, a));
    ic[i] = resid + outcome_pred(i, alt - 1) - outcome_pred(i, ref - 1) - ate;
  }
  return ic;
}

WaldInterval wald_interval(const Vector& ic, double ate) {
  const int n = static_cast<int>(ic.size());
  if (n < 2) throw Error("wald_interval: need n >= 2");
  const double var = ic.squaredNorm() / n;
  const double se = std::sqrt(var / n);
  return {se, ate - 1.96 * se, ate + 1.96 * se};
}

std::string estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::TmleMultinomial: return "tmle-multinomial";
    case EstimatorKind::TmleBinomial: return "tmle-binomial";
    case EstimatorKind::IptwMultinomial: return "iptw-multinomial";
    case EstimatorKind::IptwBinomial: return "iptw-binomial";
    case EstimatorKind::GComputation: return "gcomp";
  }
  return "?";
}

EstimatorKind estimator_from_name(const std::string& name) {
  if (name == "tmle-multinomial") return EstimatorKind::TmleMultinomial;
  if (name == "tmle-binomial") return EstimatorKind::TmleBinomial;
  if (name == "iptw-multinomial") return EstimatorKind::IptwMultinomial;
  if (name == "iptw-binomial") return EstimatorKind::IptwBinomial;
  if (name == "gcomp" || name == "g-computation") return EstimatorKind::GComputation;
  throw Error("unknown estimator: " + name);
}

std::vector<LearnerSpec> learner_library(LearnerLibrary lib, int class_count) {
  const bool multinomial = class_count > 2;
  std::vector<LearnerSpec> specs;
  switch (lib) {
    case LearnerLibrary::Glm:
      specs.push_back(multinomial ? LearnerSpec::multinomial_glm()
                                  : LearnerSpec::binomial_glm());
      break;
    case LearnerLibrary::SlDesk: {
      specs.push_back(multinomial ? LearnerSpec::multinomial_glm()
                                  : LearnerSpec::binomial_glm());
      LearnerSpec enet = LearnerSpec::elastic_net(0.5);
      enet.path_length = 25;  // desk-scale path
      specs.push_back(enet);
      specs.push_back(LearnerSpec::grad_boost(100, 3, 0.1));
      break;
    }
    case LearnerLibrary::SlFull:
      specs.push_back(LearnerSpec::grad_boost(100, 3, 0.1));
      specs.push_back(LearnerSpec::elastic_net(0.25));
      specs.push_back(LearnerSpec::elastic_net(0.50));
      specs.push_back(LearnerSpec::elastic_net(0.75));
      specs.push_back(LearnerSpec::elastic_net(1.0));
      specs.push_back(LearnerSpec::grad_boost(500, 4, 0.1));
      break;
  }
  return specs;
}

namespace {

Matrix select_columns(const Matrix& X, const std::vector<int>& cols) {
  if (cols.empty()) return X;
  Matrix out(X.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= X.cols())
      throw Error("column subset index out of range");
    out.col(j) = X.col(cols[j]);
  }
  return out;
}

// Probability of class 2 ("positive") from a K=2 ensemble.
Vector positive_prob(const Ensemble& e, const Matrix& X) {
  return predict_proba(e, X).col(1);
}

}  // namespace

namespace {

void check_positivity(const Dataset& d) {
  const IntVector counts = counts_per_level(d);
  for (int j = 0; j < d.level_count; ++j)
    if (counts[j] == 0)
      throw Error("positivity violation: empty treatment arm " +
                  (j < static_cast<int>(d.level_labels.size())
                       ? d.level_labels[j]
                       : std::to_string(j + 1)));
}

void fit_treatment_models(const Dataset& d, const EstimationConfig& cfg,
                          const NuisanceRequest& req, FittedNuisance& out) {
  const int n = d.n();
  const int J = d.level_count;
  const Matrix X_treat = select_columns(d.covariates, cfg.treatment_cols);

  if (req.need_multinomial) {
    const auto specs = learner_library(cfg.library, J);
    Ensemble e = fit_super_learner(specs, X_treat, d.treatments, J, cfg.folds,
                                   mix64(cfg.seed) ^ 0xb200ull);
    PropensityMatrix pm;
    pm.probs = predict_proba(e, X_treat);
    pm.source = PropensitySource::Multinomial;
    out.multinomial = std::move(pm);
    out.treatment_multinomial = std::move(e);
  }

  if (req.need_binomial) {
    const auto specs = learner_library(cfg.library, 2);
    Matrix probs(n, J);
    for (int j = 0; j < J; ++j) {
      IntVector lab(n);
      for (int i = 0; i < n; ++i) lab[i] = d.treatments[i] - 1 == j ? 2 : 1;
      Ensemble e = fit_super_learner(specs, X_treat, lab, 2, cfg.folds,
                                     mix64(cfg.seed) ^ (0xc300ull + static_cast<std::uint64_t>(j)));
      probs.col(j) = positive_prob(e, X_treat);
      out.treatment_binomial.push_back(std::move(e));
    }
    PropensityMatrix pm;
    pm.probs = std::move(probs);
    pm.source = PropensitySource::BinomialPerLevel;
    out.binomial = std::move(pm);
  }
}

}  // namespace

FittedNuisance fit_nuisance(const Dataset& d, const EstimationConfig& cfg,
                            const NuisanceRequest& req) {
  const int n = d.n();
  const int J = d.level_count;
  check_positivity(d);

  FittedNuisance out;
  const Matrix X_outcome = select_columns(d.covariates, cfg.outcome_cols);

  // outcome model: one binomial fit per treatment arm, predictions for all i
  out.initial_outcome.resize(n, J);
  const auto outcome_specs = learner_library(cfg.library, 2);
  for (int j = 0; j < J; ++j) {
    std::vector<int> arm;
    for (int i = 0; i < n; ++i)
      if (d.treatments[i] - 1 == j) arm.push_back(i);
    Matrix Xa(arm.size(), X_outcome.cols());
    IntVector ya(arm.size());
    for (std::size_t i = 0; i < arm.size(); ++i) {
      Xa.row(i) = X_outcome.row(arm[i]);
      ya[i] = d.outcomes[arm[i]] == 1.0 ? 2 : 1;
    }
    Ensemble e = fit_super_learner(outcome_specs, Xa, ya, 2, cfg.folds,
                                   mix64(cfg.seed) ^ (0xa100ull + static_cast<std::uint64_t>(j)));
    out.initial_outcome.col(j) = positive_prob(e, X_outcome);
    out.outcome_models.push_back(std::move(e));
  }
  out.initial_outcome = out.initial_outcome.array()
                            .max(kFluctuationBound)
                            .min(1.0 - kFluctuationBound)
                            .matrix();

  fit_treatment_models(d, cfg, req, out);
  return out;
}

FittedNuisance fit_nuisance_treatment_only(const Dataset& d,
                                           const EstimationConfig& cfg,
                                           const NuisanceRequest& req) {
  check_positivity(d);
  FittedNuisance out;
  fit_treatment_models(d, cfg, req, out);
  return out;
}

NuisanceFits assemble_nuisance(const Dataset& d, const FittedNuisance& fits,
                               PropensitySource source,
                               const std::optional<WinsorConfig>& winsor) {
  NuisanceFits nf;
  const auto& pm = source == PropensitySource::Multinomial ? fits.multinomial
                                                           : fits.binomial;
  if (!pm) throw Error("requested propensity source was not fitted");
  nf.propensities = winsor ? winsorize(*pm, *winsor) : *pm;
  nf.propensities.validate();
  nf.initial_outcome = fits.initial_outcome;
  nf.observed_pred.resize(d.n());
  for (int i = 0; i < d.n(); ++i)
    nf.observed_pred[i] = nf.initial_outcome(i, d.treatments[i] - 1);
  return nf;
}

EstimateTable estimate_pairs_from_nuisance(const Dataset& d,
                                           EstimatorKind estimator,
                                           const NuisanceFits& nf,
                                           std::optional<int> reference) {
  const int J = d.level_count;
  if (reference && (*reference < 1 || *reference > J))
    throw Error("reference level out of range");

  Vector mu;
  Matrix pred_for_ic;
  switch (estimator) {
    case EstimatorKind::TmleMultinomial: {
      const FluctuationFit fit = tmle_fluctuate_multinomial(d, nf);
      pred_for_ic = tmle_update(nf, fit);
      mu = pred_for_ic.colwise().mean();
      break;
    }
    case EstimatorKind::TmleBinomial: {
      const FluctuationFit fit = tmle_fluctuate_binomial(d, nf);
      pred_for_ic = tmle_update(nf, fit);
      mu = pred_for_ic.colwise().mean();
      break;
    }
    case EstimatorKind::IptwMultinomial:
    case EstimatorKind::IptwBinomial:
      mu = iptw(d, nf.propensities);
      pred_for_ic = nf.initial_outcome;
      break;
    case EstimatorKind::GComputation:
      mu = g_computation(nf);
      pred_for_ic = nf.initial_outcome;
      break;
  }

  EstimateTable table;
  table.estimator = estimator;
  table.n = d.n();
  auto add_pair = [&](int ref, int alt) {
    if (ref == alt) throw Error("reference and alternative levels must differ");
    EstimateRow row;
    row.ref_level = ref;
    row.alt_level = alt;
    row.mu_ref = mu[ref - 1];
    row.mu_alt = mu[alt - 1];
    row.ate = row.mu_alt - row.mu_ref;
    const Vector ic = influence_curve(d, pred_for_ic, nf.propensities, ref, alt,
                                      row.ate);
    const WaldInterval w = wald_interval(ic, row.ate);
    row.se = w.se;
    row.ci_lo = w.lo;
    row.ci_hi = w.hi;
    table.rows.push_back(row);
  };

  if (reference) {
    for (int alt = 1; alt <= J; ++alt)
      if (alt != *reference) add_pair(*reference, alt);
  } else {
    for (int ref = 1; ref <= J; ++ref)
      for (int alt = ref + 1; alt <= J; ++alt) add_pair(ref, alt);
  }
  return table;
}

EstimateTable estimate_all_pairs(const Dataset& d, const EstimationConfig& cfg) {
  NuisanceRequest req;
  switch (cfg.estimator) {
    case EstimatorKind::TmleMultinomial:
    case EstimatorKind::IptwMultinomial:
    case EstimatorKind::GComputation:
      req.need_multinomial = true;
      break;
    case EstimatorKind::TmleBinomial:
    case EstimatorKind::IptwBinomial:
      req.need_binomial = true;
      break;
  }
  const FittedNuisance fits = fit_nuisance(d, cfg, req);
  const PropensitySource source = req.need_multinomial
                                      ? PropensitySource::Multinomial
                                      : PropensitySource::BinomialPerLevel;
  const NuisanceFits nf = assemble_nuisance(d, fits, source, cfg.winsor);
  return estimate_pairs_from_nuisance(d, cfg.estimator, nf, cfg.reference);
}

}  // namespace mvt
