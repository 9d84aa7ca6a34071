#include "mvt/super_learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvt/rng.hpp"

namespace mvt {

FoldAssignment make_folds(int n, const IntVector& labels, int V,
                          std::uint64_t seed) {
  if (V < 2) throw Error("make_folds: need V >= 2");
  if (n < 2 * V) throw Error("make_folds: need n >= 2V");
  if (labels.size() != n) throw Error("make_folds: label length mismatch");

  int max_label = 0;
  for (int i = 0; i < n; ++i) max_label = std::max(max_label, labels[i]);
  std::vector<std::vector<int>> by_class(max_label);
  for (int i = 0; i < n; ++i) by_class[labels[i] - 1].push_back(i);

  bool stratified = true;
  for (const auto& cls : by_class)
    if (!cls.empty() && static_cast<int>(cls.size()) < V) stratified = false;

  Rng rng = Rng::derive(seed, 0xf01d5);
  FoldAssignment fa;
  fa.folds = V;
  fa.stratified = stratified;
  fa.fold_of.assign(n, 0);

  auto shuffle = [&rng](std::vector<int>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_u64() % (i + 1));
      std::swap(v[i], v[j]);
    }
  };

  if (stratified) {
    int next = 0;  // fold rotation continues across classes to keep sizes even
    for (auto& cls : by_class) {
      shuffle(cls);
      for (int idx : cls) {
        fa.fold_of[idx] = next + 1;
        next = (next + 1) % V;
      }
    }
  } else {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order);
    for (int i = 0; i < n; ++i) fa.fold_of[order[i]] = (i % V) + 1;
  }
  return fa;
}

CvPredictions cv_predictions(const std::vector<LearnerSpec>& specs,
                             const Matrix& X, const IntVector& labels,
                             int class_count, const FoldAssignment& folds) {
  if (specs.empty()) throw Error("cv_predictions: no learner specs");
  const int n = static_cast<int>(X.rows());
  CvPredictions out;

  for (const auto& spec : specs) {
    Matrix oof = Matrix::Zero(n, class_count);
    bool ok = true;
    std::string failure;
    for (int v = 1; v <= folds.folds && ok; ++v) {
      std::vector<int> train_idx, val_idx;
      for (int i = 0; i < n; ++i)
        (folds.fold_of[i] == v ? val_idx : train_idx).push_back(i);
      Matrix Xt(train_idx.size(), X.cols());
      IntVector lt(train_idx.size());
      for (std::size_t i = 0; i < train_idx.size(); ++i) {
        Xt.row(i) = X.row(train_idx[i]);
        lt[i] = labels[train_idx[i]];
      }
      Matrix Xv(val_idx.size(), X.cols());
      for (std::size_t i = 0; i < val_idx.size(); ++i) Xv.row(i) = X.row(val_idx[i]);

      try {
        const FittedLearner fit = fit_learner(spec, Xt, lt, class_count);
        Matrix pv = predict_proba(fit, Xv);
        if (pv.cols() != class_count) {
          // binomial learner used for a 2-class target stores K=2 already
          throw Error("prediction width mismatch");
        }
        for (std::size_t i = 0; i < val_idx.size(); ++i)
          oof.row(val_idx[i]) = pv.row(i);
      } catch (const std::exception& e) {
        ok = false;
        failure = e.what();
      }
    }
    if (ok) {
      out.out_of_fold.push_back(std::move(oof));
      out.kept_specs.push_back(spec);
      out.member_nll.push_back(mean_nll(out.out_of_fold.back(), labels));
    } else {
      out.dropped.push_back(spec.name() + " (" + failure + ")");
    }
  }
  if (out.kept_specs.empty())
    throw Error("cv_predictions: every member failed; last: " +
                (out.dropped.empty() ? std::string("?") : out.dropped.back()));
  return out;
}

Vector optimize_weights(const std::vector<Matrix>& out_of_fold,
                        const IntVector& labels) {
  const int M = static_cast<int>(out_of_fold.size());
  if (M == 0) throw Error("optimize_weights: no members");
  const int n = static_cast<int>(labels.size());

  // p_m[i] = member m's probability of the observed label
  Matrix P(n, M);
  for (int m = 0; m < M; ++m)
    for (int i = 0; i < n; ++i)
      P(i, m) = clamp_prob(out_of_fold[m](i, labels[i] - 1));

  auto objective = [&](const Vector& w) {
    const Vector mix = P * w;
    double nll = 0.0;
    for (int i = 0; i < n; ++i) nll -= std::log(std::max(mix[i], 1e-300));
    return nll / n;
  };

  Vector w = Vector::Constant(M, 1.0 / M);
  double obj = objective(w);
  if (!std::isfinite(obj)) throw Error("optimize_weights: non-finite objective");

  double eta = 1.0;
  for (int iter = 0; iter < 5000; ++iter) {
    const Vector mix = P * w;
    Vector grad = Vector::Zero(M);
    for (int i = 0; i < n; ++i) grad -= P.row(i).transpose() / std::max(mix[i], 1e-300);
    grad /= n;

    bool accepted = false;
    for (int bt = 0; bt < 50; ++bt) {
      Vector cand = (w.array().log() - eta * grad.array()).exp();
      const double s = cand.sum();
      if (!(s > 0) || !std::isfinite(s)) {
        eta *= 0.5;
        continue;
      }
      cand /= s;
      const double cand_obj = objective(cand);
      if (cand_obj <= obj + 1e-15) {
        const double delta = obj - cand_obj;
        w = cand;
        obj = cand_obj;
        accepted = true;
        if (delta <= 1e-10) iter = 5000;  // converged
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    eta *= 1.3;
  }

  // never return a point worse than the best vertex
  int best_vertex = 0;
  double best_vertex_obj = std::numeric_limits<double>::infinity();
  for (int m = 0; m < M; ++m) {
    Vector v = Vector::Zero(M);
    v[m] = 1.0;
    const double vo = objective(v);
    if (vo < best_vertex_obj) {
      best_vertex_obj = vo;
      best_vertex = m;
    }
  }
  if (best_vertex_obj < obj) {
    w = Vector::Zero(M);
    w[best_vertex] = 1.0;
  }
  return w;
}

Ensemble fit_super_learner(const std::vector<LearnerSpec>& specs,
                           const Matrix& X, const IntVector& labels,
                           int class_count, int V, std::uint64_t seed) {
  const FoldAssignment folds =
      make_folds(static_cast<int>(X.rows()), labels, V, seed);
  CvPredictions cv = cv_predictions(specs, X, labels, class_count, folds);

  Ensemble e;
  e.fold_warning = !folds.stratified;
  e.dropped = cv.dropped;
  e.weights = optimize_weights(cv.out_of_fold, labels);
  e.cv_nll_per_member =
      Eigen::Map<const Vector>(cv.member_nll.data(), cv.member_nll.size());

  Matrix mix = Matrix::Zero(X.rows(), class_count);
  for (std::size_t m = 0; m < cv.out_of_fold.size(); ++m)
    mix += e.weights[m] * cv.out_of_fold[m];
  e.cv_nll_ensemble = mean_nll(mix, labels);

  for (const auto& spec : cv.kept_specs) {
    e.members.push_back(fit_learner(spec, X, labels, class_count));
    e.member_names.push_back(spec.name());
  }
  return e;
}

Matrix predict_proba(const Ensemble& e, const Matrix& X) {
  if (e.members.empty()) throw Error("ensemble has no members");
  Matrix out;
  for (std::size_t m = 0; m < e.members.size(); ++m) {
    const Matrix pm = predict_proba(e.members[m], X);
    if (m == 0)
      out = e.weights[m] * pm;
    else
      out += e.weights[m] * pm;
  }
  return out;
}

}  // namespace mvt
