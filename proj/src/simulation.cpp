#include "mvt/simulation.hpp"

#include "mvt/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace mvt {

std::string overlap_name(Overlap o) {
  switch (o) {
    case Overlap::Adequate: return "adequate";
    case Overlap::Inadequate: return "inadequate";
    case Overlap::Rct: return "rct";
  }
  return "?";
}
std::string event_rate_name(EventRate e) {
  switch (e) {
    case EventRate::Low: return "low";
    case EventRate::Moderate: return "moderate";
    case EventRate::NoEffect: return "no-effect";
  }
  return "?";
}
std::string regime_name(CovariateRegime r) {
  switch (r) {
    case CovariateRegime::Standard6: return "standard6";
    case CovariateRegime::HighDim40: return "highdim40";
    case CovariateRegime::HighDim100: return "highdim100";
    case CovariateRegime::ThreeLevel: return "threelevel";
  }
  return "?";
}
std::string misspec_name(Misspec m) {
  switch (m) {
    case Misspec::None: return "none";
    case Misspec::OmitX6Outcome: return "omit-x6-outcome";
    case Misspec::OmitX6Treatment: return "omit-x6-treatment";
    case Misspec::OmitX6Both: return "omit-x6-both";
  }
  return "?";
}
Overlap overlap_from_name(const std::string& s) {
  if (s == "adequate") return Overlap::Adequate;
  if (s == "inadequate") return Overlap::Inadequate;
  if (s == "rct") return Overlap::Rct;
  throw Error("unknown overlap setting: " + s);
}
EventRate event_rate_from_name(const std::string& s) {
  if (s == "low") return EventRate::Low;
  if (s == "moderate") return EventRate::Moderate;
  if (s == "no-effect" || s == "noeffect") return EventRate::NoEffect;
  throw Error("unknown event rate setting: " + s);
}
CovariateRegime regime_from_name(const std::string& s) {
  if (s == "standard6") return CovariateRegime::Standard6;
  if (s == "highdim40") return CovariateRegime::HighDim40;
  if (s == "highdim100") return CovariateRegime::HighDim100;
  if (s == "threelevel") return CovariateRegime::ThreeLevel;
  throw Error("unknown covariate regime: " + s);
}
Misspec misspec_from_name(const std::string& s) {
  if (s == "none") return Misspec::None;
  if (s == "omit-x6-outcome") return Misspec::OmitX6Outcome;
  if (s == "omit-x6-treatment") return Misspec::OmitX6Treatment;
  if (s == "omit-x6-both") return Misspec::OmitX6Both;
  throw Error("unknown misspecification: " + s);
}

int regime_covariates(CovariateRegime r) {
  switch (r) {
    case CovariateRegime::Standard6: return 6;
    case CovariateRegime::HighDim40: return 40;
    case CovariateRegime::HighDim100: return 100;
    case CovariateRegime::ThreeLevel: return 6;
  }
  return 6;
}
int regime_levels(CovariateRegime r) {
  return r == CovariateRegime::ThreeLevel ? 3 : 6;
}

// ---------------------------------------------------------------------------
// covariate generation

namespace {

// Cholesky factor of [[2,1,-1],[1,1,-.5],[-1,-.5,1]]
const Matrix& mvn_cholesky() {
  static const Matrix L = [] {
    Matrix sigma(3, 3);
    sigma << 2, 1, -1, 1, 1, -0.5, -1, -0.5, 1;
    return Matrix(Eigen::LLT<Matrix>(sigma).matrixL());
  }();
  return L;
}

struct DiscreteDist {
  std::vector<double> pmf;
  double mean = 0, sd = 1;
};

DiscreteDist finalize(std::vector<double> pmf) {
  double z = 0;
  for (double p : pmf) z += p;
  for (double& p : pmf) p /= z;
  double mean = 0, m2 = 0;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    mean += k * pmf[k];
    m2 += static_cast<double>(k) * k * pmf[k];
  }
  return {pmf, mean, std::sqrt(std::max(m2 - mean * mean, 1e-12))};
}

const DiscreteDist& geometric_trunc() {  // p = .3, support 0..10
  static const DiscreteDist d = [] {
    std::vector<double> pmf;
    for (int k = 0; k <= 10; ++k) pmf.push_back(0.3 * std::pow(0.7, k));
    return finalize(pmf);
  }();
  return d;
}

const DiscreteDist& hypergeometric_50_25_10() {
  static const DiscreteDist d = [] {
    auto lgamma1 = [](double x) { return std::lgamma(x + 1.0); };
    auto log_choose = [&](int n, int k) {
      return lgamma1(n) - lgamma1(k) - lgamma1(n - k);
    };
    std::vector<double> pmf;
    for (int k = 0; k <= 10; ++k)
      pmf.push_back(std::exp(log_choose(25, k) + log_choose(25, 10 - k) -
                             log_choose(50, 10)));
    return finalize(pmf);
  }();
  return d;
}

const DiscreteDist& poisson_trunc() {  // lambda = 2, support 0..8
  static const DiscreteDist d = [] {
    std::vector<double> pmf;
    double term = std::exp(-2.0);
    for (int k = 0; k <= 8; ++k) {
      pmf.push_back(term);
      term *= 2.0 / (k + 1);
    }
    return finalize(pmf);
  }();
  return d;
}

struct ContinuousMoments {
  double mean, sd;
};

// Simpson quadrature of the truncated density's first two moments.
ContinuousMoments quad_moments(double lo, double hi,
                               double (*density)(double)) {
  const int steps = 20000;
  const double h = (hi - lo) / steps;
  double z = 0, m1 = 0, m2 = 0;
  for (int k = 0; k <= steps; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == steps) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    const double f = w * density(x);
    z += f;
    m1 += f * x;
    m2 += f * x * x;
  }
  m1 /= z;
  m2 /= z;
  return {m1, std::sqrt(std::max(m2 - m1 * m1, 1e-12))};
}

const ContinuousMoments& exp_trunc_moments() {  // rate 1, cap 5
  static const ContinuousMoments m =
      quad_moments(0.0, 5.0, [](double x) { return std::exp(-x); });
  return m;
}

const ContinuousMoments& logistic_trunc_moments() {  // scale 1, cap 5
  static const ContinuousMoments m = quad_moments(-5.0, 5.0, [](double x) {
    const double e = std::exp(-x);
    return e / ((1.0 + e) * (1.0 + e));
  });
  return m;
}

}  // namespace

Matrix gen_covariates_6(int n, Rng& rng) {
  Matrix X(n, 6);
  const Matrix& L = mvn_cholesky();
  for (int i = 0; i < n; ++i) {
    Vector z(3);
    z << rng.normal(), rng.normal(), rng.normal();
    X.block(i, 0, 1, 3) = (L * z).transpose();
  }
  for (int i = 0; i < n; ++i) X(i, 3) = rng.uniform(-3.0, 3.0);
  for (int i = 0; i < n; ++i) X(i, 4) = rng.chi_squared_1();
  for (int i = 0; i < n; ++i) X(i, 5) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return X;
}

Matrix gen_covariates_highdim(int n, int p, Rng& rng) {
  if (p != 40 && p != 100) throw Error("high-dim regime supports p in {40,100}");
  Matrix X(n, p);
  X.leftCols(6) = gen_covariates_6(n, rng);
  for (int j = 6; j < p; ++j) {
    switch ((j - 6) % 5) {
      case 0: {
        const auto& m = exp_trunc_moments();
        for (int i = 0; i < n; ++i)
          X(i, j) = (rng.exponential_truncated(1.0, 5.0) - m.mean) / m.sd;
        break;
      }
      case 1: {
        const auto& d = geometric_trunc();
        for (int i = 0; i < n; ++i)
          X(i, j) = (rng.discrete(d.pmf) - d.mean) / d.sd;
        break;
      }
      case 2: {
        const auto& d = hypergeometric_50_25_10();
        for (int i = 0; i < n; ++i)
          X(i, j) = (rng.discrete(d.pmf) - d.mean) / d.sd;
        break;
      }
      case 3: {
        const auto& m = logistic_trunc_moments();
        for (int i = 0; i < n; ++i)
          X(i, j) = (rng.logistic_truncated(5.0) - m.mean) / m.sd;
        break;
      }
      case 4: {
        const auto& d = poisson_trunc();
        for (int i = 0; i < n; ++i)
          X(i, j) = (rng.discrete(d.pmf) - d.mean) / d.sd;
        break;
      }
    }
  }
  return X;
}

// ---------------------------------------------------------------------------
// coefficient grids

namespace {

Vector kappa_values(Overlap overlap, CovariateRegime regime) {
  if (regime == CovariateRegime::ThreeLevel) {
    Vector k(2);
    switch (overlap) {
      case Overlap::Adequate: k << 0.2, 0.1; break;
      case Overlap::Inadequate: k << 0.7, 0.4; break;
      case Overlap::Rct: k << 0.0, 0.0; break;
    }
    return k;
  }
  Vector k(5);
  switch (overlap) {
    case Overlap::Adequate: k << 0.1, 0.15, 0.2, 0.25, 0.3; break;
    case Overlap::Inadequate: k << 0.4, 0.6, 0.8, 1.0, 1.2; break;
    case Overlap::Rct: k.setZero(); break;
  }
  return k;
}

}  // namespace

Matrix treatment_coefficients(Overlap overlap, CovariateRegime regime) {
  const int p = regime_covariates(regime);
  const int J = regime_levels(regime);
  const Vector kappa = kappa_values(overlap, regime);
  Matrix beta = Matrix::Zero(p + 1, J);

  switch (regime) {
    case CovariateRegime::Standard6: {
      const double pat[6][7] = {
          {0, 0, 0, 0, 0, 0, 0},   {0, 1, 1, 2, 1, 1, 1},
          {0, 1, 1, 1, 1, 1, -5},  {0, 1, 1, 1, 1, 1, 5},
          {0, 1, 1, 1, -2, 1, 1},  {0, 1, 1, 1, -2, -1, 1}};
      for (int j = 1; j < 6; ++j)
        for (int r = 0; r < 7; ++r) beta(r, j) = kappa[j - 1] * pat[j][r];
      break;
    }
    case CovariateRegime::ThreeLevel: {
      const double pat2[7] = {0, 1, 1, 1, -1, 1, 1};
      const double pat3[7] = {0, 1, 1, 1, 1, 1, 1};
      for (int r = 0; r < 7; ++r) {
        beta(r, 1) = kappa[0] * pat2[r];
        beta(r, 2) = kappa[1] * pat3[r];
      }
      break;
    }
    case CovariateRegime::HighDim40:
    case CovariateRegime::HighDim100: {
      // beta_2: fill value 0.5 (p=40) or 0.15 (p=100) with a 1 on x3
      const double fill2 = regime == CovariateRegime::HighDim40 ? 0.5 : 0.15;
      beta.col(1).setConstant(fill2);
      beta(0, 1) = 0.0;
      beta(3, 1) = 1.0;
      // beta_3..beta_6: 0.15 fill with overrides on the last three covariates
      const double tail[4][3] = {
          {0, -1, 0.5}, {0, 1, 0.5}, {-2, 1, 1}, {-1, -1, -1}};
      for (int j = 2; j < 6; ++j) {
        beta.col(j).setConstant(0.15);
        beta(0, j) = j == 5 ? 0.25 : 0.0;
        for (int t = 0; t < 3; ++t) beta(p - 2 + t, j) = tail[j - 2][t];
      }
      for (int j = 1; j < 6; ++j) beta.col(j) *= kappa[j - 1];
      break;
    }
  }
  return beta;
}

Matrix outcome_coefficients(EventRate rate, CovariateRegime regime) {
  const int p = regime_covariates(regime);
  const int J = regime_levels(regime);
  Matrix gamma = Matrix::Zero(p + 1, J);
  if (rate == EventRate::NoEffect) return gamma;

  // base 7-entry rows (intercept first)
  std::vector<std::array<double, 7>> base;
  if (regime == CovariateRegime::ThreeLevel) {
    if (rate == EventRate::Low)
      base = {{{-4, 1, -2, -1, 1, 1, 1}},
              {{-2, 1, -1, -1, -1, -1, -4}},
              {{3, 3, -1, 1, -2, -1, -2}}};
    else
      base = {{{-1.5, 1, 1, 1, 1, 1, 1}},
              {{-3, 2, 3, 1, 2, 2, 2}},
              {{1.5, 3, 1, 2, -1, -1, -1}}};
  } else {
    if (rate == EventRate::Low) {
      base = {{{-4, 1, -2, -1, 1, 1, 1}},   {{-6, 1, -2, -1, 1, 1, 1}},
              {{-2, 1, -1, -1, -1, -1, -4}}, {{1, 2, 1, 2, -1, -1, -3}},
              {{-2, 2, -1, 1, -2, -1, -3}},  {{-3, 3, -1, 1, -2, -1, -2}}};
      if (regime == CovariateRegime::HighDim100)
        base[5] = {{-3, -2, -1, 1, -2, -1, -2}};
    } else {
      base = {{{-1.5, 1, 1, 1, 1, 1, 1}}, {{-3, 2, 3, 1, 2, 2, 2}},
              {{3, 3, 1, 2, -1, -1, -4}}, {{2.5, 4, 1, 2, -1, -1, -3}},
              {{2, 5, 1, 2, -1, -1, -2}}, {{1.5, 6, 1, 2, -1, -1, -1}}};
    }
  }

  // intercept kept; the six slope values repeat cyclically across columns
  for (int j = 0; j < J; ++j) {
    gamma(0, j) = base[j][0];
    for (int r = 1; r <= p; ++r) gamma(r, j) = base[j][1 + (r - 1) % 6];
  }
  return gamma;
}

Matrix treatment_probabilities(const Matrix& X, const Matrix& beta) {
  const int n = static_cast<int>(X.rows());
  Matrix Z(n, X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  const Matrix scores = Z * beta;
  Matrix P(n, beta.cols());
  for (int i = 0; i < n; ++i) {
    Vector row = scores.row(i).transpose();
    const double mx = row.maxCoeff();
    Vector e = (row.array() - mx).exp();
    P.row(i) = (e / e.sum()).transpose();
  }
  return P;
}

IntVector gen_treatment(const Matrix& X, Overlap overlap, int J, Rng& rng) {
  CovariateRegime regime = CovariateRegime::Standard6;
  if (J == 3)
    regime = CovariateRegime::ThreeLevel;
  else if (X.cols() == 40)
    regime = CovariateRegime::HighDim40;
  else if (X.cols() == 100)
    regime = CovariateRegime::HighDim100;
  const Matrix P = treatment_probabilities(X, treatment_coefficients(overlap, regime));
  IntVector a(X.rows());
  for (Index i = 0; i < X.rows(); ++i)
    a[i] = rng.categorical(P.row(i).transpose()) + 1;
  return a;
}

Matrix gen_potential_outcomes(const Matrix& X, EventRate rate, int J, Rng& rng) {
  CovariateRegime regime = CovariateRegime::Standard6;
  if (J == 3)
    regime = CovariateRegime::ThreeLevel;
  else if (X.cols() == 40)
    regime = CovariateRegime::HighDim40;
  else if (X.cols() == 100)
    regime = CovariateRegime::HighDim100;
  const Matrix gamma = outcome_coefficients(rate, regime);
  const int n = static_cast<int>(X.rows());
  Matrix Z(n, X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  const Matrix eta = Z * gamma;
  Matrix Y(n, J);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < J; ++j)
      Y(i, j) = rng.bernoulli(expit(eta(i, j) + 1.0)) ? 1.0 : 0.0;
  return Y;
}

void ScenarioConfig::check() const {
  if (n < 10) throw Error("scenario n too small");
  if (replications < 1) throw Error("need at least one replication");
  if (levels != regime_levels(regime))
    throw Error("regime " + regime_name(regime) + " requires J=" +
                std::to_string(regime_levels(regime)));
  if (misspec != Misspec::None && regime != CovariateRegime::Standard6)
    throw Error("misspecification scenarios require the standard6 regime");
  if (winsor) winsor->check();
}

MisspecColumns apply_misspecification(Misspec m, CovariateRegime regime, int p) {
  if (m != Misspec::None && regime != CovariateRegime::Standard6)
    throw Error("misspecification scenarios require the standard6 regime");
  std::vector<int> all, drop6;
  for (int c = 0; c < p; ++c) {
    all.push_back(c);
    if (c != 5) drop6.push_back(c);
  }
  MisspecColumns cols;
  switch (m) {
    case Misspec::None:
      break;  // empty = all columns
    case Misspec::OmitX6Outcome:
      cols.outcome_cols = drop6;
      break;
    case Misspec::OmitX6Treatment:
      cols.treatment_cols = drop6;
      break;
    case Misspec::OmitX6Both:
      cols.outcome_cols = drop6;
      cols.treatment_cols = drop6;
      break;
  }
  return cols;
}

SimulatedData gen_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::derive(cfg.master_seed, seed);
  const int p = regime_covariates(cfg.regime);
  const int J = cfg.levels;

  SimulatedData sim;
  Matrix X = cfg.regime == CovariateRegime::Standard6 ||
                     cfg.regime == CovariateRegime::ThreeLevel
                 ? gen_covariates_6(cfg.n, rng)
                 : gen_covariates_highdim(cfg.n, p, rng);

  sim.true_probs =
      treatment_probabilities(X, treatment_coefficients(cfg.overlap, cfg.regime));
  IntVector a(cfg.n);
  for (int i = 0; i < cfg.n; ++i)
    a[i] = rng.categorical(sim.true_probs.row(i).transpose()) + 1;

  sim.potential_outcomes = gen_potential_outcomes(X, cfg.event_rate, J, rng);
  sim.true_mu = sim.potential_outcomes.colwise().mean();

  Dataset d;
  d.covariates = std::move(X);
  d.treatments = a;
  d.level_count = J;
  d.outcomes.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i)
    d.outcomes[i] = sim.potential_outcomes(i, a[i] - 1);
  for (int c = 0; c < p; ++c) d.covariate_names.push_back("x" + std::to_string(c + 1));
  for (int j = 1; j <= J; ++j) d.level_labels.push_back(std::to_string(j));
  sim.data = std::move(d);
  return sim;
}

SimulatedData gen_scenario_3(int n, Overlap overlap, EventRate rate, Rng& rng) {
  ScenarioConfig cfg;
  cfg.levels = 3;
  cfg.n = n;
  cfg.regime = CovariateRegime::ThreeLevel;
  cfg.overlap = overlap;
  cfg.event_rate = rate;
  // reuse the scenario generator with a stream drawn from the caller's rng
  cfg.master_seed = rng.next_u64();
  return gen_scenario(cfg, 0);
}

// ---------------------------------------------------------------------------
// Monte-Carlo driver

namespace {

struct PairEstimate {
  double ate, se, lo, hi;
};

struct RepRecord {
  bool generated = false;
  std::vector<double> true_ate;                       // per pair
  std::vector<std::optional<std::vector<PairEstimate>>> per_estimator;
  std::optional<std::vector<PairEstimate>> baseline;  // TMLE-multinomial GLM
  double prob_err_multi = std::numeric_limits<double>::quiet_NaN();
  double prob_err_bin = std::numeric_limits<double>::quiet_NaN();
  double ess_multi = std::numeric_limits<double>::quiet_NaN();
  double ess_bin = std::numeric_limits<double>::quiet_NaN();
};

std::vector<PairEstimate> table_to_pairs(const EstimateTable& t) {
  std::vector<PairEstimate> out;
  for (const auto& r : t.rows) out.push_back({r.ate, r.se, r.ci_lo, r.ci_hi});
  return out;
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (v.size() - 1);
}

double mean_ess_ratio(const Dataset& d, const PropensityMatrix& pm) {
  const auto entries = ess(d, pm);
  double total = 0;
  int used = 0;
  for (const auto& e : entries)
    if (std::isfinite(e.ratio)) {
      total += e.ratio;
      ++used;
    }
  return used ? total / used : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg_in) {
  ScenarioConfig cfg = cfg_in;
  cfg.check();
  if (cfg.estimators.empty())
    cfg.estimators = {EstimatorKind::TmleMultinomial, EstimatorKind::TmleBinomial,
                      EstimatorKind::IptwMultinomial, EstimatorKind::IptwBinomial,
                      EstimatorKind::GComputation};

  const int J = cfg.levels;
  const int H = cfg.replications;
  const int E = static_cast<int>(cfg.estimators.size());
  std::vector<std::pair<int, int>> pairs;  // 1-based (ref, alt)
  for (int r = 1; r <= J; ++r)
    for (int a = r + 1; a <= J; ++a) pairs.emplace_back(r, a);
  const int Q = static_cast<int>(pairs.size());

  bool need_multi = false, need_bin = false;
  for (auto e : cfg.estimators) {
    if (e == EstimatorKind::TmleMultinomial || e == EstimatorKind::IptwMultinomial ||
        e == EstimatorKind::GComputation)
      need_multi = true;
    if (e == EstimatorKind::TmleBinomial || e == EstimatorKind::IptwBinomial)
      need_bin = true;
  }

  const MisspecColumns mcols =
      apply_misspecification(cfg.misspec, cfg.regime, regime_covariates(cfg.regime));

  std::vector<RepRecord> records(H);

  auto run_one = [&](int h) {
    RepRecord rec;
    rec.per_estimator.assign(E, std::nullopt);
    try {
      const SimulatedData sim = gen_scenario(cfg, static_cast<std::uint64_t>(h));
      rec.true_ate.resize(Q);
      for (int q = 0; q < Q; ++q)
        rec.true_ate[q] =
            sim.true_mu[pairs[q].second - 1] - sim.true_mu[pairs[q].first - 1];
      rec.generated = true;

      EstimationConfig ecfg;
      ecfg.library = cfg.library;
      ecfg.folds = cfg.folds;
      ecfg.seed = mix64(cfg.master_seed) ^ mix64(static_cast<std::uint64_t>(h) + 1);
      ecfg.outcome_cols = mcols.outcome_cols;
      ecfg.treatment_cols = mcols.treatment_cols;

      NuisanceRequest req;
      req.need_multinomial = need_multi || cfg.library == LearnerLibrary::Glm;
      req.need_binomial = need_bin;

      FittedNuisance fits = fit_nuisance(sim.data, ecfg, req);

      std::optional<NuisanceFits> nf_multi, nf_bin;
      if (fits.multinomial)
        nf_multi = assemble_nuisance(sim.data, fits, PropensitySource::Multinomial,
                                     cfg.winsor);
      if (fits.binomial)
        nf_bin = assemble_nuisance(sim.data, fits, PropensitySource::BinomialPerLevel,
                                   cfg.winsor);

      if (fits.multinomial) {
        rec.prob_err_multi =
            (fits.multinomial->probs - sim.true_probs).cwiseAbs().mean();
        rec.ess_multi = mean_ess_ratio(sim.data, *fits.multinomial);
      }
      if (fits.binomial) {
        rec.prob_err_bin =
            (fits.binomial->probs - sim.true_probs).cwiseAbs().mean();
        rec.ess_bin = mean_ess_ratio(sim.data, *fits.binomial);
      }

      for (int e = 0; e < E; ++e) {
        const EstimatorKind kind = cfg.estimators[e];
        const bool multi = kind == EstimatorKind::TmleMultinomial ||
                           kind == EstimatorKind::IptwMultinomial ||
                           kind == EstimatorKind::GComputation;
        try {
          const NuisanceFits& nf = multi ? *nf_multi : *nf_bin;
          rec.per_estimator[e] = table_to_pairs(
              estimate_pairs_from_nuisance(sim.data, kind, nf, std::nullopt));
        } catch (const std::exception&) {
          rec.per_estimator[e] = std::nullopt;
        }
      }

      // relative-precision baseline: TMLE-multinomial with GLM nuisances
      try {
        if (cfg.library == LearnerLibrary::Glm) {
          rec.baseline = table_to_pairs(estimate_pairs_from_nuisance(
              sim.data, EstimatorKind::TmleMultinomial, *nf_multi, std::nullopt));
        } else {
          EstimationConfig gcfg = ecfg;
          gcfg.library = LearnerLibrary::Glm;
          NuisanceRequest greq;
          greq.need_multinomial = true;
          FittedNuisance gfits = fit_nuisance(sim.data, gcfg, greq);
          const NuisanceFits gnf = assemble_nuisance(
              sim.data, gfits, PropensitySource::Multinomial, cfg.winsor);
          rec.baseline = table_to_pairs(estimate_pairs_from_nuisance(
              sim.data, EstimatorKind::TmleMultinomial, gnf, std::nullopt));
        }
      } catch (const std::exception&) {
        rec.baseline = std::nullopt;
      }
    } catch (const std::exception&) {
      // whole replication failed (generation or shared nuisance fitting)
    }
    records[h] = std::move(rec);
  };

  int threads = cfg.threads > 0
                    ? cfg.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, H));
  if (threads == 1) {
    for (int h = 0; h < H; ++h) run_one(h);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int h = next.fetch_add(1); h < H; h = next.fetch_add(1)) run_one(h);
      });
    for (auto& th : pool) th.join();
  }

  // aggregate
  ScenarioResult result;
  result.config = cfg;

  std::vector<std::vector<double>> baseline_by_pair(Q);
  for (const auto& rec : records)
    if (rec.baseline)
      for (int q = 0; q < Q; ++q) baseline_by_pair[q].push_back((*rec.baseline)[q].ate);

  double pm_sum = 0, pb_sum = 0, em_sum = 0, eb_sum = 0;
  int pm_n = 0, pb_n = 0, em_n = 0, eb_n = 0;
  for (const auto& rec : records) {
    if (std::isfinite(rec.prob_err_multi)) { pm_sum += rec.prob_err_multi; ++pm_n; }
    if (std::isfinite(rec.prob_err_bin)) { pb_sum += rec.prob_err_bin; ++pb_n; }
    if (std::isfinite(rec.ess_multi)) { em_sum += rec.ess_multi; ++em_n; }
    if (std::isfinite(rec.ess_bin)) { eb_sum += rec.ess_bin; ++eb_n; }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.prob_error_multinomial = pm_n ? pm_sum / pm_n : nan;
  result.prob_error_binomial = pb_n ? pb_sum / pb_n : nan;
  result.ess_ratio_multinomial = em_n ? em_sum / em_n : nan;
  result.ess_ratio_binomial = eb_n ? eb_sum / eb_n : nan;

  for (int e = 0; e < E; ++e) {
    EstimatorSummary summary;
    summary.estimator = cfg.estimators[e];
    summary.failures = 0;
    double bias_total = 0, cov_total = 0, width_total = 0, prec_total = 0;
    int prec_pairs = 0;

    std::vector<std::vector<double>> est_by_pair(Q);
    std::vector<double> bias_sum(Q, 0), cov_sum(Q, 0), width_sum(Q, 0);
    std::vector<int> used(Q, 0);

    for (int h = 0; h < H; ++h) {
      const auto& rec = records[h];
      if (!rec.generated || !rec.per_estimator[e]) {
        ++summary.failures;
        continue;
      }
      const auto& est = *rec.per_estimator[e];
      for (int q = 0; q < Q; ++q) {
        const double truth = rec.true_ate[q];
        bias_sum[q] += std::abs(est[q].ate - truth);
        cov_sum[q] += (est[q].lo <= truth && truth <= est[q].hi) ? 1.0 : 0.0;
        width_sum[q] += est[q].hi - est[q].lo;
        est_by_pair[q].push_back(est[q].ate);
        ++used[q];
        result.raw.push_back({h + 1, cfg.estimators[e], pairs[q].first,
                              pairs[q].second, est[q].ate, est[q].se, est[q].lo,
                              est[q].hi, truth});
      }
    }

    for (int q = 0; q < Q; ++q) {
      PairMetrics pm;
      pm.ref_level = pairs[q].first;
      pm.alt_level = pairs[q].second;
      pm.replications_used = used[q];
      pm.mean_abs_bias = used[q] ? bias_sum[q] / used[q] : nan;
      pm.coverage = used[q] ? cov_sum[q] / used[q] : nan;
      pm.mean_ci_width = used[q] ? width_sum[q] / used[q] : nan;
      const double var_base = sample_variance(baseline_by_pair[q]);
      const double var_est = sample_variance(est_by_pair[q]);
      pm.rel_precision =
          (std::isfinite(var_base) && std::isfinite(var_est) && var_est > 0)
              ? var_base / var_est
              : nan;
      summary.pairs.push_back(pm);
      if (used[q]) {
        bias_total += pm.mean_abs_bias;
        cov_total += pm.coverage;
        width_total += pm.mean_ci_width;
      }
      if (std::isfinite(pm.rel_precision)) {
        prec_total += pm.rel_precision;
        ++prec_pairs;
      }
    }
    const int live_pairs =
        static_cast<int>(std::count_if(used.begin(), used.end(),
                                       [](int u) { return u > 0; }));
    summary.avg_abs_bias = live_pairs ? bias_total / live_pairs : nan;
    summary.avg_coverage = live_pairs ? cov_total / live_pairs : nan;
    summary.avg_ci_width = live_pairs ? width_total / live_pairs : nan;
    summary.avg_rel_precision = prec_pairs ? prec_total / prec_pairs : nan;
    result.estimators.push_back(std::move(summary));

    result.max_failure_fraction =
        std::max(result.max_failure_fraction,
                 static_cast<double>(result.estimators.back().failures) / H);
  }

  for (int h = 0; h < H; ++h) {
    const auto& rec = records[h];
    bool any_fail = !rec.generated;
    for (int e = 0; e < E && !any_fail; ++e)
      if (!rec.per_estimator[e]) any_fail = true;
    if (any_fail) ++result.failed_replications;
  }
  return result;
}

}  // namespace mvt
