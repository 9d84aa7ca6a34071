#include "mvt/diagnostics.hpp"

#include <cmath>
#include <limits>

namespace mvt {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

std::vector<EssEntry> ess(const Dataset& d, const PropensityMatrix& pm) {
  const int J = d.level_count;
  std::vector<EssEntry> out;
  for (int j = 0; j < J; ++j) {
    std::vector<double> w;
    for (int i = 0; i < d.n(); ++i) {
      if (d.treatments[i] - 1 != j) continue;
      const double p = pm.probs(i, j);
      if (!(p > 0.0)) throw Error("ess: nonpositive propensity");
      w.push_back(1.0 / p);
    }
    EssEntry entry{j + 1, static_cast<int>(w.size()), kNan, kNan};
    if (!w.empty()) {
      double wmax = 0.0;
      for (double v : w) wmax = std::max(wmax, v);
      double s = 0.0, s2 = 0.0;
      for (double v : w) {
        const double u = v / wmax;
        s += u;
        s2 += u * u;
      }
      entry.ess = s * s / s2;
      entry.ratio = entry.ess / entry.n_level;
    }
    out.push_back(entry);
  }
  return out;
}

OverlapReport overlap_summary(const PropensityMatrix& pm, const Dataset& d) {
  const auto ess_entries = ess(d, pm);
  const int n = d.n();
  OverlapReport report;
  for (int j = 0; j < d.level_count; ++j) {
    const Vector col = pm.probs.col(j);
    LevelOverlap lv;
    lv.level = j + 1;
    lv.n_level = ess_entries[j].n_level;
    lv.min = col.minCoeff();
    lv.max = col.maxCoeff();
    lv.mean = col.mean();
    lv.sd = std::sqrt((col.array() - lv.mean).square().sum() /
                      std::max(1, n - 1));
    lv.ess = ess_entries[j].ess;
    lv.ess_ratio = ess_entries[j].ratio;
    report.levels.push_back(lv);
  }
  return report;
}

BalanceReport covariate_balance(const Dataset& d,
                                const std::optional<PropensityMatrix>& pm) {
  const int n = d.n();
  const int J = d.level_count;
  const int p = d.p();
  BalanceReport report;

  for (int c = 0; c < p; ++c) {
    const Vector x = d.covariates.col(c);
    const double overall_mean = x.mean();
    const double sd = std::sqrt((x.array() - overall_mean).square().sum() /
                                std::max(1, n - 1));

    BalanceRow row;
    row.covariate = c < static_cast<int>(d.covariate_names.size())
                        ? d.covariate_names[c]
                        : "x" + std::to_string(c + 1);
    if (sd == 0.0) {
      row.zero_variance = true;
      row.smd_unadjusted = 0.0;
      row.smd_weighted = pm ? 0.0 : kNan;
      row.flagged = false;
      report.rows.push_back(row);
      continue;
    }

    Vector mean_raw = Vector::Zero(J), mean_w = Vector::Zero(J);
    Vector cnt = Vector::Zero(J), wsum = Vector::Zero(J);
    for (int i = 0; i < n; ++i) {
      const int j = d.treatments[i] - 1;
      mean_raw[j] += x[i];
      cnt[j] += 1.0;
      if (pm) {
        const double w = 1.0 / pm->probs(i, j);
        mean_w[j] += w * x[i];
        wsum[j] += w;
      }
    }
    double smd_raw = 0.0, smd_w = 0.0;
    for (int j = 0; j < J; ++j) {
      for (int k = j + 1; k < J; ++k) {
        if (cnt[j] == 0.0 || cnt[k] == 0.0) continue;
        smd_raw = std::max(smd_raw, std::abs(mean_raw[j] / cnt[j] -
                                             mean_raw[k] / cnt[k]) /
                                        sd);
        if (pm)
          smd_w = std::max(smd_w, std::abs(mean_w[j] / wsum[j] -
                                           mean_w[k] / wsum[k]) /
                                      sd);
      }
    }
    row.smd_unadjusted = smd_raw;
    row.smd_weighted = pm ? smd_w : kNan;
    row.flagged = (pm ? smd_w : smd_raw) > report.threshold;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace mvt
