#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvt/dataset.hpp"
#include "mvt/estimators.hpp"
#include "mvt/types.hpp"

namespace mvt {

struct EssEntry {
  int level;      // 1-based
  int n_level;
  double ess;     // NaN when the level is empty
  double ratio;   // ess / n_level, NaN when empty
};

// ESS_j = (sum of within-arm inverse-propensity weights)^2 / (sum of squared
// weights). Weights are rescaled by their within-arm maximum before the
// formula, which leaves ESS unchanged and makes constant weights give
// ESS_j = n_j exactly.
std::vector<EssEntry> ess(const Dataset& d, const PropensityMatrix& pm);

struct LevelOverlap {
  int level;
  int n_level;
  double min, mean, max, sd;  // of the full p_j column
  double ess, ess_ratio;
};

struct OverlapReport {
  std::vector<LevelOverlap> levels;
};

OverlapReport overlap_summary(const PropensityMatrix& pm, const Dataset& d);

struct BalanceRow {
  std::string covariate;
  double smd_unadjusted;  // max absolute pairwise standardized mean difference
  double smd_weighted;    // NaN when no propensities given
  bool zero_variance = false;
  bool flagged = false;   // exceeds the 0.2 threshold (on the adjusted value
                          // when available, otherwise unadjusted)
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  double threshold = 0.2;
};

// Pairwise standardized mean differences per covariate: |m_j - m_k| divided
// by the overall-sample unweighted standard deviation, maximized over level
// pairs. Weighted means use 1(a_i = j)/p_j(x_i) weights, normalized within
// arm.
BalanceReport covariate_balance(const Dataset& d,
                                const std::optional<PropensityMatrix>& pm);

}  // namespace mvt
