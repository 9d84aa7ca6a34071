#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvt/types.hpp"

namespace mvt {

// One observation per row: binary outcome, treatment level in 1..J, dense
// covariate row (no intercept column). Immutable after construction; safe to
// share read-only across workers.
struct Dataset {
  Vector outcomes;                          // entries in {0,1}
  IntVector treatments;                     // entries in 1..level_count
  Matrix covariates;                        // n x p
  int level_count = 0;                      // J
  std::vector<std::string> covariate_names; // size p (may be empty)
  std::vector<std::string> level_labels;    // original labels, index j-1

  int n() const { return static_cast<int>(outcomes.size()); }
  int p() const { return static_cast<int>(covariates.cols()); }

  // throws Error when any invariant fails
  void validate() const;
};

// Header row required; treatment labels are remapped to 1..J in first
// appearance order, original labels kept in level_labels.
Dataset load_csv(const std::string& path, const std::string& outcome_col,
                 const std::string& treatment_col,
                 const std::vector<std::string>& covariate_cols);

// Inverse of load_csv: outcome, treatment (original labels), covariates.
void write_csv(const std::string& path, const Dataset& d,
               const std::string& outcome_col = "y",
               const std::string& treatment_col = "a");

IntVector counts_per_level(const Dataset& d);

}  // namespace mvt
