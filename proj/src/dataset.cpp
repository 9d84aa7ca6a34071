#include "mvt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "mvt/csv.hpp"

namespace mvt {

namespace {

double parse_double(const std::string& s, int row, const std::string& col) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw Error("unparseable value '" + s + "' at row " + std::to_string(row) +
                ", column " + col);
  return v;
}

int find_column(const CsvTable& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw Error("missing column: " + name);
  return static_cast<int>(it - t.header.begin());
}

}  // namespace

void Dataset::validate() const {
  const int nn = n();
  if (treatments.size() != nn || covariates.rows() != nn)
    throw Error("dataset containers disagree on n");
  if (level_count < 2) throw Error("need at least 2 treatment levels");
  for (int i = 0; i < nn; ++i) {
    if (outcomes[i] != 0.0 && outcomes[i] != 1.0)
      throw Error("non-binary outcome at row " + std::to_string(i + 1));
    if (treatments[i] < 1 || treatments[i] > level_count)
      throw Error("treatment index out of range at row " + std::to_string(i + 1));
  }
  if (!covariates.allFinite()) throw Error("non-finite covariate value");
}

Dataset load_csv(const std::string& path, const std::string& outcome_col,
                 const std::string& treatment_col,
                 const std::vector<std::string>& covariate_cols) {
  const CsvTable t = read_csv(path);
  const int yc = find_column(t, outcome_col);
  const int ac = find_column(t, treatment_col);
  std::vector<int> xc;
  for (const auto& name : covariate_cols) xc.push_back(find_column(t, name));

  const int n = static_cast<int>(t.rows.size());
  const int p = static_cast<int>(xc.size());
  if (n == 0) throw Error("no data rows in " + path);

  Dataset d;
  d.outcomes.resize(n);
  d.treatments.resize(n);
  d.covariates.resize(n, p);
  d.covariate_names = covariate_cols;

  std::unordered_map<std::string, int> level_of;
  for (int i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    if (static_cast<int>(row.size()) != static_cast<int>(t.header.size()))
      throw Error("wrong field count at row " + std::to_string(i + 1));

    const double y = parse_double(row[yc], i + 1, outcome_col);
    if (y != 0.0 && y != 1.0)
      throw Error("non-binary outcome at row " + std::to_string(i + 1));
    d.outcomes[i] = y;

    const std::string& label = row[ac];
    auto it = level_of.find(label);
    if (it == level_of.end()) {
      it = level_of.emplace(label, static_cast<int>(level_of.size()) + 1).first;
      d.level_labels.push_back(label);
    }
    d.treatments[i] = it->second;

    for (int j = 0; j < p; ++j) {
      const double v = parse_double(row[xc[j]], i + 1, covariate_cols[j]);
      if (!std::isfinite(v))
        throw Error("non-finite covariate at row " + std::to_string(i + 1) +
                    ", column " + covariate_cols[j]);
      d.covariates(i, j) = v;
    }
  }
  d.level_count = static_cast<int>(level_of.size());
  d.validate();
  return d;
}

void write_csv(const std::string& path, const Dataset& d,
               const std::string& outcome_col, const std::string& treatment_col) {
  CsvTable t;
  t.header.push_back(outcome_col);
  t.header.push_back(treatment_col);
  for (int j = 0; j < d.p(); ++j)
    t.header.push_back(j < static_cast<int>(d.covariate_names.size())
                           ? d.covariate_names[j]
                           : "x" + std::to_string(j + 1));
  for (int i = 0; i < d.n(); ++i) {
    std::vector<std::string> row;
    row.push_back(format_double(d.outcomes[i]));
    const int lvl = d.treatments[i];
    row.push_back(lvl <= static_cast<int>(d.level_labels.size())
                      ? d.level_labels[lvl - 1]
                      : std::to_string(lvl));
    for (int j = 0; j < d.p(); ++j) row.push_back(format_double(d.covariates(i, j)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

IntVector counts_per_level(const Dataset& d) {
  IntVector counts = IntVector::Zero(d.level_count);
  for (int i = 0; i < d.n(); ++i) counts[d.treatments[i] - 1] += 1;
  return counts;
}

}  // namespace mvt
