#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mvt/estimators.hpp"
#include "mvt/rng.hpp"
#include "mvt/simulation.hpp"

using namespace mvt;

namespace {

// The documented 6-row fixture used throughout: J=3, two observations per
// arm, propensity rows on the simplex, initial outcome predictions free.
struct Fixture {
  Dataset d;
  NuisanceFits nf;
};

Fixture six_row_fixture() {
  Fixture f;
  f.d.level_count = 3;
  f.d.outcomes.resize(6);
  f.d.outcomes << 1, 0, 0, 1, 1, 0;
  f.d.treatments.resize(6);
  f.d.treatments << 1, 1, 2, 2, 3, 3;
  f.d.covariates = Matrix::Zero(6, 1);
  f.d.level_labels = {"1", "2", "3"};

  Matrix probs(6, 3);
  probs << 0.5, 0.3, 0.2,
           0.4, 0.4, 0.2,
           0.3, 0.5, 0.2,
           0.2, 0.6, 0.2,
           0.3, 0.3, 0.4,
           0.25, 0.25, 0.5;
  f.nf.propensities.probs = probs;
  f.nf.propensities.source = PropensitySource::Multinomial;

  Matrix e0(6, 3);
  e0 << 0.60, 0.30, 0.55,
        0.35, 0.45, 0.60,
        0.40, 0.35, 0.65,
        0.45, 0.55, 0.70,
        0.50, 0.40, 0.75,
        0.55, 0.50, 0.60;
  f.nf.initial_outcome = e0;
  f.nf.observed_pred.resize(6);
  for (int i = 0; i < 6; ++i)
    f.nf.observed_pred[i] = e0(i, f.d.treatments[i] - 1);
  return f;
}

double expit_ref(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double logit_ref(double p) { return std::log(p / (1.0 - p)); }

// independent 1-D root finder for the per-level fluctuation score:
// sum_k h_k (y_k - expit(off_k + eps h_k)) = 0, monotone decreasing in eps
double bisect_epsilon(const std::vector<double>& h, const std::vector<double>& off,
                      const std::vector<double>& y) {
  auto score = [&](double eps) {
    double s = 0;
    for (std::size_t k = 0; k < h.size(); ++k)
      s += h[k] * (y[k] - expit_ref(off[k] + eps * h[k]));
    return s;
  };
  double lo = -50, hi = 50;
  for (int it = 0; it < 500; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (score(mid) > 0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Matrix random_probs(int n, int J, Rng& rng) {
  Matrix P(n, J);
  for (int i = 0; i < n; ++i) {
    double total = 0;
    for (int j = 0; j < J; ++j) {
      P(i, j) = 0.05 + rng.uniform();
      total += P(i, j);
    }
    P.row(i) /= total;
  }
  return P;
}

}  // namespace

// ---------------------------------------------------------------------------
// winsorize

TEST_CASE("winsorize clamps and renormalizes multinomial rows") {
  PropensityMatrix pm;
  pm.probs.resize(1, 2);
  pm.probs << 0.001, 0.999;
  pm.source = PropensitySource::Multinomial;
  const PropensityMatrix out = winsorize(pm, {0.005, 0.995});
  CHECK(out.probs(0, 0) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(out.probs(0, 1) == doctest::Approx(0.995).epsilon(1e-12));
  CHECK(out.probs.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("winsorize is the identity when all entries are inside the bounds") {
  Rng rng(31);
  PropensityMatrix pm;
  pm.probs = random_probs(20, 3, rng);
  pm.source = PropensitySource::Multinomial;
  const PropensityMatrix out = winsorize(pm, {0.005, 0.995});
  CHECK((out.probs - pm.probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("binomial-source winsorize clamps without renormalizing") {
  PropensityMatrix pm;
  pm.probs.resize(1, 2);
  pm.probs << 0.001, 0.999;
  pm.source = PropensitySource::BinomialPerLevel;
  const PropensityMatrix out = winsorize(pm, {0.005, 0.995});
  CHECK(out.probs(0, 0) == 0.005);
  CHECK(out.probs(0, 1) == 0.995);
}

TEST_CASE("winsorized multinomial rows always sum to one") {
  Rng rng(32);
  PropensityMatrix pm;
  pm.probs = random_probs(50, 6, rng);
  // push some entries out of bounds
  pm.probs(3, 0) = 1e-6;
  pm.probs(7, 2) = 0.9999;
  pm.source = PropensitySource::Multinomial;
  const PropensityMatrix out = winsorize(pm, {0.005, 0.995});
  for (int i = 0; i < 50; ++i)
    CHECK(std::abs(out.probs.row(i).sum() - 1.0) <= 1e-8);
}

// ---------------------------------------------------------------------------
// g-computation / IPTW

TEST_CASE("g_computation is the column mean of the outcome predictions") {
  NuisanceFits nf;
  nf.initial_outcome = Matrix::Constant(10, 2, 0.3);
  CHECK(g_computation(nf)[0] == doctest::Approx(0.3).epsilon(1e-15));

  nf.initial_outcome.resize(2, 1);
  nf.initial_outcome << 0.2, 0.4;
  CHECK(g_computation(nf)[0] == doctest::Approx(0.3).epsilon(1e-15));

  const Fixture f = six_row_fixture();
  const Vector mu = g_computation(f.nf);
  for (int j = 0; j < 3; ++j) {
    double s = 0;
    for (int i = 0; i < 6; ++i) s += f.nf.initial_outcome(i, j);
    CHECK(std::abs(mu[j] - s / 6.0) <= 1e-12);
  }
}

TEST_CASE("iptw matches the 4-row hand fixture") {
  Dataset d;
  d.level_count = 2;
  d.outcomes.resize(4);
  d.outcomes << 1, 0, 1, 0;
  d.treatments.resize(4);
  d.treatments << 1, 1, 2, 2;
  d.covariates = Matrix::Zero(4, 1);
  PropensityMatrix pm;
  pm.probs.resize(4, 2);
  pm.probs << 0.8, 0.2, 0.5, 0.5, 0.4, 0.6, 0.5, 0.5;
  pm.source = PropensitySource::Multinomial;
  const Vector mu = iptw(d, pm);
  CHECK(mu[0] == doctest::Approx(0.3125).epsilon(1e-12));        // (1/.8)/4
  CHECK(mu[1] == doctest::Approx(1.0 / 2.4).epsilon(1e-12));     // (1/.6)/4
}

TEST_CASE("iptw rejects a zero propensity") {
  Dataset d;
  d.level_count = 2;
  d.outcomes.resize(2);
  d.outcomes << 1, 0;
  d.treatments.resize(2);
  d.treatments << 1, 2;
  d.covariates = Matrix::Zero(2, 1);
  PropensityMatrix pm;
  pm.probs.resize(2, 2);
  pm.probs << 0.0, 1.0, 0.5, 0.5;
  const auto run = [&] { return iptw(d, pm); };
  CHECK_THROWS_WITH_AS(run(), doctest::Contains("zero propensity"), Error);
}

TEST_CASE("iptw with exact marginal propensities collapses to group means") {
  Rng rng(33);
  const int n = 600;
  Dataset d;
  d.level_count = 3;
  d.outcomes.resize(n);
  d.treatments.resize(n);
  d.covariates = Matrix::Zero(n, 1);
  for (int i = 0; i < n; ++i) {
    d.treatments[i] = 1 + static_cast<int>(rng.next_u64() % 3);
    d.outcomes[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  }
  const IntVector counts = counts_per_level(d);
  PropensityMatrix pm;
  pm.probs.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) pm.probs(i, j) = double(counts[j]) / n;
  pm.source = PropensitySource::Multinomial;
  const Vector mu = iptw(d, pm);
  for (int j = 0; j < 3; ++j) {
    double s = 0;
    for (int i = 0; i < n; ++i)
      if (d.treatments[i] - 1 == j) s += d.outcomes[i];
    CHECK(mu[j] == doctest::Approx(s / counts[j]).epsilon(1e-12));
  }

  // all-ones outcome with exact marginals integrates to exactly 1
  d.outcomes.setOnes();
  const Vector mu1 = iptw(d, pm);
  for (int j = 0; j < 3; ++j) CHECK(mu1[j] == doctest::Approx(1.0).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// TMLE fluctuation

TEST_CASE("fluctuation at a zero-score fixed point returns epsilon = 0") {
  Fixture f = six_row_fixture();
  // set each arm's observed predictions to the weighted mean so scores vanish
  for (int j = 0; j < 3; ++j) {
    double num = 0, den = 0;
    for (int i = 0; i < 6; ++i) {
      if (f.d.treatments[i] - 1 != j) continue;
      const double h = 1.0 / f.nf.propensities.probs(i, j);
      num += h * f.d.outcomes[i];
      den += h;
    }
    const double target = std::clamp(num / den, 0.05, 0.95);
    for (int i = 0; i < 6; ++i)
      if (f.d.treatments[i] - 1 == j) f.nf.initial_outcome(i, j) = target;
  }
  for (int i = 0; i < 6; ++i)
    f.nf.observed_pred[i] = f.nf.initial_outcome(i, f.d.treatments[i] - 1);

  const FluctuationFit fit = tmle_fluctuate_multinomial(f.d, f.nf);
  CHECK(fit.converged);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.epsilons(j, 0)) <= 1e-9);
  const Matrix updated = tmle_update(f.nf, fit);
  CHECK((updated - f.nf.initial_outcome).cwiseAbs().maxCoeff() <= 1e-8);

  const FluctuationFit bfit = tmle_fluctuate_binomial(f.d, f.nf);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(bfit.epsilons(j, 0)) <= 1e-9);
}

TEST_CASE("multinomial epsilon matches the separable 1-D root-finder oracle") {
  const Fixture f = six_row_fixture();
  const FluctuationFit fit = tmle_fluctuate_multinomial(f.d, f.nf);
  REQUIRE(fit.converged);
  CHECK(fit.score_norm <= 1e-8);

  for (int j = 0; j < 3; ++j) {
    std::vector<double> h, off, y;
    for (int i = 0; i < 6; ++i) {
      if (f.d.treatments[i] - 1 != j) continue;
      h.push_back(1.0 / f.nf.propensities.probs(i, j));
      off.push_back(logit_ref(f.nf.observed_pred[i]));
      y.push_back(f.d.outcomes[i]);
    }
    const double oracle = bisect_epsilon(h, off, y);
    CHECK(std::abs(fit.epsilons(j, 0) - oracle) <= 1e-10);
  }
}

TEST_CASE("tmle point estimates match spreadsheet arithmetic on the fixture") {
  const Fixture f = six_row_fixture();
  const FluctuationFit fit = tmle_fluctuate_multinomial(f.d, f.nf);
  const Vector mu = tmle_estimate(f.d, f.nf, fit);

  for (int j = 0; j < 3; ++j) {
    double s = 0;
    for (int i = 0; i < 6; ++i) {
      const double off = logit_ref(f.nf.initial_outcome(i, j));
      s += expit_ref(off + fit.epsilons(j, 0) / f.nf.propensities.probs(i, j));
    }
    CHECK(std::abs(mu[j] - s / 6.0) <= 1e-12);
    CHECK(mu[j] >= 0.0);
    CHECK(mu[j] <= 1.0);
  }
}

TEST_CASE("epsilon = 0 reduces TMLE exactly to g-computation") {
  const Fixture f = six_row_fixture();
  FluctuationFit zero;
  zero.epsilons = Matrix::Zero(3, 1);
  zero.converged = true;
  const Vector mu = tmle_estimate(f.d, f.nf, zero);
  const Vector g = g_computation(f.nf);
  CHECK((mu - g).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("J=2: binomial and multinomial fluctuations coincide") {
  Rng rng(34);
  const int n = 400;
  Dataset d;
  d.level_count = 2;
  d.outcomes.resize(n);
  d.treatments.resize(n);
  d.covariates = Matrix::Zero(n, 1);
  NuisanceFits nf;
  nf.propensities.probs.resize(n, 2);
  nf.propensities.source = PropensitySource::Multinomial;
  nf.initial_outcome.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const double p1 = 0.2 + 0.6 * rng.uniform();
    nf.propensities.probs(i, 0) = p1;
    nf.propensities.probs(i, 1) = 1.0 - p1;
    d.treatments[i] = rng.bernoulli(p1) ? 1 : 2;
    nf.initial_outcome(i, 0) = 0.1 + 0.8 * rng.uniform();
    nf.initial_outcome(i, 1) = 0.1 + 0.8 * rng.uniform();
    d.outcomes[i] =
        rng.bernoulli(nf.initial_outcome(i, d.treatments[i] - 1)) ? 1.0 : 0.0;
  }
  nf.observed_pred.resize(n);
  for (int i = 0; i < n; ++i)
    nf.observed_pred[i] = nf.initial_outcome(i, d.treatments[i] - 1);

  const Vector mu_m = tmle_estimate(d, nf, tmle_fluctuate_multinomial(d, nf));
  const Vector mu_b = tmle_estimate(d, nf, tmle_fluctuate_binomial(d, nf));
  CHECK((mu_m - mu_b).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("J=3: the two variants' winsorized pipelines give different epsilon") {
  Rng rng(35);
  const int n = 300;
  Dataset d;
  d.level_count = 3;
  d.outcomes.resize(n);
  d.treatments.resize(n);
  d.covariates = Matrix::Zero(n, 1);
  PropensityMatrix raw;
  raw.probs.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    // extreme entries so clamping + renormalization actually bites
    double a = 0.001 + 0.2 * rng.uniform();
    double b = 0.6 + 0.39 * rng.uniform();
    double c = std::max(1.0 - a - b, 1e-4);
    const double z = a + b + c;
    raw.probs(i, 0) = a / z;
    raw.probs(i, 1) = b / z;
    raw.probs(i, 2) = c / z;
    d.treatments[i] = rng.categorical(raw.probs.row(i).transpose()) + 1;
    d.outcomes[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  Matrix e0(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) e0(i, j) = 0.2 + 0.6 * rng.uniform();

  const WinsorConfig w{0.005, 0.995};
  auto make_nf = [&](PropensitySource source) {
    PropensityMatrix pm = raw;
    pm.source = source;
    NuisanceFits nf;
    nf.propensities = winsorize(pm, w);
    nf.initial_outcome = e0;
    nf.observed_pred.resize(n);
    for (int i = 0; i < n; ++i)
      nf.observed_pred[i] = e0(i, d.treatments[i] - 1);
    return nf;
  };

  const NuisanceFits nf_multi = make_nf(PropensitySource::Multinomial);
  const NuisanceFits nf_bin = make_nf(PropensitySource::BinomialPerLevel);
  const FluctuationFit fm = tmle_fluctuate_multinomial(d, nf_multi);
  const FluctuationFit fb = tmle_fluctuate_binomial(d, nf_bin);
  double max_diff = 0;
  for (int j = 0; j < 3; ++j)
    max_diff = std::max(max_diff,
                        std::abs(fm.epsilons(j, 0) - fb.epsilons(j, 0)));
  CHECK(max_diff > 1e-6);
}

// ---------------------------------------------------------------------------
// influence curve and intervals

TEST_CASE("influence curve matches elementwise hand arithmetic on the fixture") {
  const Fixture f = six_row_fixture();
  const FluctuationFit fit = tmle_fluctuate_multinomial(f.d, f.nf);
  const Matrix updated = tmle_update(f.nf, fit);
  const Vector mu = updated.colwise().mean();
  const double ate = mu[1] - mu[0];
  const Vector ic = influence_curve(f.d, updated, f.nf.propensities, 1, 2, ate);

  for (int i = 0; i < 6; ++i) {
    const int a = f.d.treatments[i] - 1;
    double w = 0;
    if (a == 1) w = 1.0 / f.nf.propensities.probs(i, 1);
    if (a == 0) w = -1.0 / f.nf.propensities.probs(i, 0);
    const double expected = w * (f.d.outcomes[i] - updated(i, a)) +
                            updated(i, 1) - updated(i, 0) - ate;
    CHECK(std::abs(ic[i] - expected) <= 1e-12);
  }

  // rows outside {ref, alt} contribute no residual term
  const double expected_row4 = updated(4, 1) - updated(4, 0) - ate;
  CHECK(std::abs(ic[4] - expected_row4) <= 1e-12);

  CHECK(std::abs(ic.mean()) <= 1e-8);  // score identity at the TMLE fit
}

TEST_CASE("wald intervals: degenerate, alternating, and fixture cases") {
  const Vector zero = Vector::Zero(50);
  const WaldInterval w0 = wald_interval(zero, 0.12);
  CHECK(w0.se == 0.0);
  CHECK(w0.lo == doctest::Approx(0.12).epsilon(1e-15));
  CHECK(w0.hi == doctest::Approx(0.12).epsilon(1e-15));

  Vector pm1(100);
  for (int i = 0; i < 100; ++i) pm1[i] = i % 2 ? 1.0 : -1.0;
  const WaldInterval w1 = wald_interval(pm1, 0.0);
  CHECK(w1.se == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(w1.lo == doctest::Approx(-0.196).epsilon(1e-12));
  CHECK(w1.hi == doctest::Approx(0.196).epsilon(1e-12));

  Rng rng(36);
  Vector ic(40);
  for (int i = 0; i < 40; ++i) ic[i] = rng.normal();
  const WaldInterval w2 = wald_interval(ic, 0.5);
  double ss = 0;
  for (int i = 0; i < 40; ++i) ss += ic[i] * ic[i];
  const double se = std::sqrt(ss / 40.0 / 40.0);
  CHECK(std::abs(w2.se - se) <= 1e-12);
  CHECK(std::abs(w2.lo - (0.5 - 1.96 * se)) <= 1e-12);
  CHECK(std::abs(w2.hi - (0.5 + 1.96 * se)) <= 1e-12);
}

TEST_CASE("antisymmetry: swapping ref and alt negates the ATE, keeps the SE") {
  const Fixture f = six_row_fixture();
  const FluctuationFit fit = tmle_fluctuate_multinomial(f.d, f.nf);
  const Matrix updated = tmle_update(f.nf, fit);
  const Vector mu = updated.colwise().mean();
  for (int ref = 1; ref <= 3; ++ref)
    for (int alt = 1; alt <= 3; ++alt) {
      if (ref == alt) continue;
      const double ate = mu[alt - 1] - mu[ref - 1];
      const Vector ic_f =
          influence_curve(f.d, updated, f.nf.propensities, ref, alt, ate);
      const Vector ic_r =
          influence_curve(f.d, updated, f.nf.propensities, alt, ref, -ate);
      CHECK((ic_f + ic_r).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(std::abs(wald_interval(ic_f, ate).se -
                     wald_interval(ic_r, -ate).se) <= 1e-15);
    }
}

// ---------------------------------------------------------------------------
// end-to-end estimator properties on simulated data

TEST_CASE("score equations and mean influence curve vanish at the TMLE fit") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    ScenarioConfig cfg;
    cfg.levels = 6;
    cfg.n = 1200;
    cfg.overlap = Overlap::Adequate;
    cfg.event_rate = EventRate::Low;
    cfg.master_seed = seed;
    const SimulatedData sim = gen_scenario(cfg, 0);

    EstimationConfig ecfg;
    ecfg.library = LearnerLibrary::Glm;
    ecfg.seed = seed;
    NuisanceRequest req;
    req.need_multinomial = true;
    const FittedNuisance fits = fit_nuisance(sim.data, ecfg, req);
    const NuisanceFits nf = assemble_nuisance(
        sim.data, fits, PropensitySource::Multinomial, std::nullopt);

    const FluctuationFit fit = tmle_fluctuate_multinomial(sim.data, nf);
    REQUIRE(fit.converged);
    const Matrix updated = tmle_update(nf, fit);

    // per-level score sums
    for (int j = 0; j < 6; ++j) {
      double score = 0;
      for (int i = 0; i < sim.data.n(); ++i) {
        if (sim.data.treatments[i] - 1 != j) continue;
        score += (sim.data.outcomes[i] - updated(i, j)) /
                 nf.propensities.probs(i, j);
      }
      CHECK(std::abs(score) <= 1e-8);
    }

    // mean IC for every pair
    const Vector mu = updated.colwise().mean();
    for (int ref = 1; ref <= 6; ++ref)
      for (int alt = ref + 1; alt <= 6; ++alt) {
        const double ate = mu[alt - 1] - mu[ref - 1];
        const Vector ic =
            influence_curve(sim.data, updated, nf.propensities, ref, alt, ate);
        CHECK(std::abs(ic.mean()) <= 1e-8);
      }
  }
}

TEST_CASE("estimate_all_pairs: J=6 gives 15 rows, reference mode gives J-1") {
  ScenarioConfig cfg;
  cfg.levels = 6;
  cfg.n = 900;
  cfg.overlap = Overlap::Rct;
  cfg.event_rate = EventRate::Moderate;
  cfg.master_seed = 21;
  const SimulatedData sim = gen_scenario(cfg, 0);

  EstimationConfig ecfg;
  ecfg.library = LearnerLibrary::Glm;
  ecfg.estimator = EstimatorKind::TmleMultinomial;
  ecfg.seed = 3;
  const EstimateTable t = estimate_all_pairs(sim.data, ecfg);
  CHECK(t.rows.size() == 15);
  for (const auto& row : t.rows) {
    CHECK(row.ate == doctest::Approx(row.mu_alt - row.mu_ref).epsilon(1e-12));
    CHECK(row.ci_lo == doctest::Approx(row.ate - 1.96 * row.se).epsilon(1e-12));
    CHECK(row.ci_hi == doctest::Approx(row.ate + 1.96 * row.se).epsilon(1e-12));
  }

  ecfg.reference = 2;
  const EstimateTable tr = estimate_all_pairs(sim.data, ecfg);
  CHECK(tr.rows.size() == 5);
  for (const auto& row : tr.rows) CHECK(row.ref_level == 2);

  ecfg.reference = 9;  // out of range: a valid distinct level cannot be formed
  CHECK_THROWS_AS(estimate_all_pairs(sim.data, ecfg), Error);
}

TEST_CASE("estimate_all_pairs raises a positivity error on an empty arm") {
  ScenarioConfig cfg;
  cfg.levels = 3;
  cfg.regime = CovariateRegime::ThreeLevel;
  cfg.n = 400;
  cfg.overlap = Overlap::Rct;
  cfg.event_rate = EventRate::Moderate;
  cfg.master_seed = 8;
  SimulatedData sim = gen_scenario(cfg, 0);
  for (int i = 0; i < sim.data.n(); ++i)
    if (sim.data.treatments[i] == 3) sim.data.treatments[i] = 1;  // empty arm 3

  EstimationConfig ecfg;
  ecfg.library = LearnerLibrary::Glm;
  CHECK_THROWS_WITH_AS(estimate_all_pairs(sim.data, ecfg),
                       doctest::Contains("positivity"), Error);
}

TEST_CASE("J=2 pipelines: binomial and multinomial TMLE agree end to end") {
  Rng rng(37);
  const int n = 1500;
  Dataset d;
  d.level_count = 2;
  d.outcomes.resize(n);
  d.treatments.resize(n);
  d.covariates.resize(n, 2);
  d.level_labels = {"1", "2"};
  for (int i = 0; i < n; ++i) {
    d.covariates(i, 0) = rng.normal();
    d.covariates(i, 1) = rng.normal();
    const double p1 = expit(0.3 + 0.8 * d.covariates(i, 0));
    d.treatments[i] = rng.bernoulli(p1) ? 1 : 2;
    d.outcomes[i] =
        rng.bernoulli(expit(-0.2 + 0.6 * d.covariates(i, 1))) ? 1.0 : 0.0;
  }

  EstimationConfig ecfg;
  ecfg.library = LearnerLibrary::Glm;
  ecfg.seed = 77;
  ecfg.estimator = EstimatorKind::TmleMultinomial;
  const EstimateTable tm = estimate_all_pairs(d, ecfg);
  ecfg.estimator = EstimatorKind::TmleBinomial;
  const EstimateTable tb = estimate_all_pairs(d, ecfg);
  REQUIRE(tm.rows.size() == 1);
  REQUIRE(tb.rows.size() == 1);
  CHECK(std::abs(tm.rows[0].ate - tb.rows[0].ate) <= 1e-8);
  CHECK(std::abs(tm.rows[0].se - tb.rows[0].se) <= 1e-8);
}
