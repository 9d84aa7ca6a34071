#include <algorithm>
#include <cmath>

#include "mvt/learners.hpp"
#include "mvt/super_learner.hpp"

namespace mvt {

namespace {

constexpr double kLambdaMinRatio = 1e-4;
constexpr std::uint64_t kInternalCvSeed = 0x1a2b3c4d5e6f7788ULL;

std::vector<double> lambda_path(double lambda_max, int length) {
  std::vector<double> path(length);
  const double lo = std::log(lambda_max * kLambdaMinRatio);
  const double hi = std::log(lambda_max);
  for (int i = 0; i < length; ++i)
    path[i] = std::exp(hi + (lo - hi) * i / (length - 1));
  return path;
}

Matrix with_intercept(const Matrix& X) {
  Matrix Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  if (X.cols() > 0) Z.rightCols(X.cols()) = X;
  return Z;
}

std::string format_lambda(double l) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", l);
  return buf;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// ---- binomial: IRLS + cyclic coordinate descent (warm-started path) ----

struct BinomialCd {
  const Matrix& X;  // standardized, no intercept column
  const Vector& y;
  double alpha;
  int max_iter;
  double tol;

  // fits in place; beta0/beta are the warm start
  bool fit(double lambda, double& beta0, Vector& beta) const {
    const Index n = X.rows();
    const Index p = X.cols();
    for (int outer = 0; outer < max_iter; ++outer) {
      Vector eta = Vector::Constant(n, beta0);
      if (p > 0) eta += X * beta;
      Vector w(n), z(n);
      for (Index i = 0; i < n; ++i) {
        const double pi = expit(eta[i]);
        w[i] = std::max(pi * (1.0 - pi), 1e-6);
        z[i] = eta[i] + (y[i] - pi) / w[i];
      }
      const double wsum = w.sum();

      double max_change = 0.0;
      Vector r = z - eta;  // working residual
      for (int inner = 0; inner < 1000; ++inner) {
        max_change = 0.0;
        // intercept (unpenalized)
        {
          const double upd = beta0 + w.dot(r) / wsum;
          const double d = upd - beta0;
          if (std::abs(d) > 0) {
            r.array() -= d;
            max_change = std::max(max_change, std::abs(d));
            beta0 = upd;
          }
        }
        for (Index j = 0; j < p; ++j) {
          const double wx2 = (w.array() * X.col(j).array().square()).sum() / n;
          const double rho =
              (w.array() * X.col(j).array() * r.array()).sum() / n + wx2 * beta[j];
          const double upd =
              soft_threshold(rho, lambda * alpha) / (wx2 + lambda * (1.0 - alpha));
          const double d = upd - beta[j];
          if (d != 0.0) {
            r -= d * X.col(j);
            max_change = std::max(max_change, std::abs(d));
            beta[j] = upd;
          }
        }
        if (max_change < tol) break;
      }

      // outer convergence on the quadratic approximation point
      Vector eta_new = Vector::Constant(n, beta0);
      if (p > 0) eta_new += X * beta;
      if ((eta_new - eta).cwiseAbs().maxCoeff() < std::max(tol, 1e-8)) return true;
    }
    return false;
  }
};

// ---- multinomial: FISTA with per-feature grouped soft-thresholding ----

struct MultinomialProx {
  const Matrix& Z;  // with intercept column
  Matrix Y;         // n x K one-hot
  double alpha;
  int max_iter;
  double tol;
  double lipschitz;

  double objective_smooth(const Matrix& B) const {
    const Index n = Z.rows();
    double nll = 0.0;
    const Matrix S = Z * B;
    for (Index i = 0; i < n; ++i) {
      Vector row = S.row(i).transpose();
      row = row.array().max(-kLinPredBound).min(kLinPredBound);
      const double m = row.maxCoeff();
      const double lse = m + std::log((row.array() - m).exp().sum());
      for (Index k = 0; k < row.size(); ++k)
        if (Y(i, k) == 1.0) nll += lse - row[k];
    }
    return nll / n;
  }

  Matrix gradient(const Matrix& B) const {
    const Index n = Z.rows();
    const Matrix S = Z * B;
    Matrix P(S.rows(), S.cols());
    for (Index i = 0; i < n; ++i) {
      Vector row = S.row(i).transpose();
      row = row.array().max(-kLinPredBound).min(kLinPredBound);
      const double m = row.maxCoeff();
      Vector e = (row.array() - m).exp();
      P.row(i) = (e / e.sum()).transpose();
    }
    return Z.transpose() * (P - Y) / n;
  }

  double penalty(const Matrix& B, double lambda) const {
    double pen = 0.0;
    for (Index j = 1; j < B.rows(); ++j) {
      const double norm2 = B.row(j).norm();
      pen += lambda * (alpha * norm2 +
                       0.5 * (1.0 - alpha) * B.row(j).squaredNorm());
    }
    return pen;
  }

  Matrix prox(Matrix B, double lambda, double step) const {
    for (Index j = 1; j < B.rows(); ++j) {
      const double norm2 = B.row(j).norm();
      const double shrink = std::max(0.0, 1.0 - step * lambda * alpha /
                                              std::max(norm2, 1e-300));
      B.row(j) *= shrink / (1.0 + step * lambda * (1.0 - alpha));
    }
    // intercepts are unpenalized; center them for identifiability
    B.row(0).array() -= B.row(0).mean();
    return B;
  }

  bool fit(double lambda, Matrix& B) const {
    Matrix Xk = B, Yk = B;
    double t_mom = 1.0;
    double step = 1.0 / lipschitz;
    double obj = objective_smooth(B) + penalty(B, lambda);
    for (int iter = 0; iter < max_iter; ++iter) {
      const Matrix G = gradient(Yk);
      const double fy = objective_smooth(Yk);
      Matrix Xnext;
      double f_next = 0.0;
      // backtracking on the smooth majorizer
      for (int bt = 0; bt < 60; ++bt) {
        Xnext = prox(Yk - step * G, lambda, step);
        const Matrix D = Xnext - Yk;
        const double fq = fy + (G.array() * D.array()).sum() +
                          D.squaredNorm() / (2.0 * step);
        f_next = objective_smooth(Xnext);
        if (f_next <= fq + 1e-14) break;
        step *= 0.5;
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
      Yk = Xnext + ((t_mom - 1.0) / t_next) * (Xnext - Xk);
      Xk = Xnext;
      t_mom = t_next;

      const double obj_next = f_next + penalty(Xk, lambda);
      if (obj_next > obj) {  // restart momentum
        Yk = Xk;
        t_mom = 1.0;
      }
      if (std::abs(obj - obj_next) <= tol * (1.0 + std::abs(obj))) {
        B = Xk;
        return true;
      }
      obj = obj_next;
      step = std::min(step * 1.25, 8.0 / lipschitz);
    }
    B = Xk;
    return false;
  }
};

double binomial_lambda_max(const Matrix& X, const Vector& y, double alpha) {
  const Index n = X.rows();
  const double ybar = y.mean();
  double best = 0.0;
  for (Index j = 0; j < X.cols(); ++j)
    best = std::max(best,
                    std::abs(X.col(j).dot(y - Vector::Constant(n, ybar))) / n);
  return best / std::max(alpha, 1e-3);
}

double multinomial_lambda_max(const Matrix& Z, const Matrix& Y, double alpha) {
  const Index n = Z.rows();
  Vector freq = Y.colwise().mean();
  Matrix resid = -Y;
  for (Index k = 0; k < Y.cols(); ++k) resid.col(k).array() += freq[k];
  double best = 0.0;
  for (Index j = 1; j < Z.cols(); ++j)
    best = std::max(best, (Z.col(j).transpose() * resid).norm() / n);
  return best / std::max(alpha, 1e-3);
}

}  // namespace

FittedLearner fit_elastic_net(const Matrix& X, const IntVector& labels,
                              int class_count, const LearnerSpec& spec,
                              std::vector<double> lambda_grid) {
  spec.check();
  const Index n = X.rows();
  if (n < 10) throw Error("elastic net: need n >= 10");
  for (std::size_t i = 1; i < lambda_grid.size(); ++i)
    if (lambda_grid[i] >= lambda_grid[i - 1])
      throw Error("elastic net: lambda grid must be descending");

  FittedLearner m;
  m.spec = spec;
  m.class_count = class_count;
  m.standardization = fit_standardization(X);
  const Matrix Xs = m.standardization.apply(X);

  const FoldAssignment folds =
      make_folds(static_cast<int>(n), labels, 5, kInternalCvSeed);

  if (class_count == 2) {
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = labels[i] == 2 ? 1.0 : 0.0;
    if (lambda_grid.empty())
      lambda_grid = lambda_path(binomial_lambda_max(Xs, y, spec.alpha),
                                spec.path_length);

    const int L = static_cast<int>(lambda_grid.size());
    Vector cv_nll = Vector::Zero(L);
    for (int v = 1; v <= folds.folds; ++v) {
      std::vector<int> train_idx, val_idx;
      for (Index i = 0; i < n; ++i)
        (folds.fold_of[i] == v ? val_idx : train_idx).push_back(static_cast<int>(i));
      Matrix Xt(train_idx.size(), Xs.cols());
      Vector yt(train_idx.size());
      for (std::size_t i = 0; i < train_idx.size(); ++i) {
        Xt.row(i) = Xs.row(train_idx[i]);
        yt[i] = y[train_idx[i]];
      }
      BinomialCd solver{Xt, yt, spec.alpha, spec.max_iter, spec.tol};
      double b0 = logit(clamp_prob(yt.mean(), 1e-6));
      Vector beta = Vector::Zero(Xs.cols());
      for (int l = 0; l < L; ++l) {
        if (!solver.fit(lambda_grid[l], b0, beta))
          throw NonConvergenceError("elastic net (binomial) failed at lambda=" +
                                        format_lambda(lambda_grid[l]),
                                    0.0);
        for (int idx : val_idx) {
          double eta = b0;
          if (Xs.cols() > 0) eta += Xs.row(idx).dot(beta);
          const double p = clamp_prob(expit(eta));
          cv_nll[l] -= y[idx] * std::log(p) + (1.0 - y[idx]) * std::log(1.0 - p);
        }
      }
    }
    int best = 0;
    for (int l = 1; l < L; ++l)
      if (cv_nll[l] < cv_nll[best]) best = l;

    BinomialCd solver{Xs, y, spec.alpha, spec.max_iter, spec.tol};
    double b0 = logit(clamp_prob(y.mean(), 1e-6));
    Vector beta = Vector::Zero(Xs.cols());
    for (int l = 0; l <= best; ++l)
      if (!solver.fit(lambda_grid[l], b0, beta))
        throw NonConvergenceError("elastic net (binomial) failed at lambda=" +
                                      format_lambda(lambda_grid[l]),
                                  0.0);
    m.coef.resize(Xs.cols() + 1, 1);
    m.coef(0, 0) = b0;
    if (Xs.cols() > 0) m.coef.col(0).tail(Xs.cols()) = beta;
    m.chosen_lambda = lambda_grid[best];
    return m;
  }

  // multinomial
  Matrix Y = Matrix::Zero(n, class_count);
  for (Index i = 0; i < n; ++i) Y(i, labels[i] - 1) = 1.0;
  const Matrix Z = with_intercept(Xs);
  const double lip =
      0.5 * (Z.colwise().squaredNorm().sum() / static_cast<double>(n));

  if (lambda_grid.empty())
    lambda_grid = lambda_path(multinomial_lambda_max(Z, Y, spec.alpha),
                              spec.path_length);
  const int L = static_cast<int>(lambda_grid.size());

  auto start_point = [&](const Matrix& Yt) {
    Matrix B = Matrix::Zero(Z.cols(), class_count);
    for (int k = 0; k < class_count; ++k)
      B(0, k) = std::log(std::max(Yt.col(k).mean(), 1e-6));
    B.row(0).array() -= B.row(0).mean();
    return B;
  };

  Vector cv_nll = Vector::Zero(L);
  for (int v = 1; v <= folds.folds; ++v) {
    std::vector<int> train_idx, val_idx;
    for (Index i = 0; i < n; ++i)
      (folds.fold_of[i] == v ? val_idx : train_idx).push_back(static_cast<int>(i));
    Matrix Zt(train_idx.size(), Z.cols());
    Matrix Yt(train_idx.size(), class_count);
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      Zt.row(i) = Z.row(train_idx[i]);
      Yt.row(i) = Y.row(train_idx[i]);
    }
    const double lip_t =
        0.5 * (Zt.colwise().squaredNorm().sum() / std::max<double>(1, Zt.rows()));
    MultinomialProx solver{Zt, Yt, spec.alpha, spec.max_iter, spec.tol, lip_t};
    Matrix B = start_point(Yt);
    for (int l = 0; l < L; ++l) {
      if (!solver.fit(lambda_grid[l], B))
        throw NonConvergenceError("elastic net (multinomial) failed at lambda=" +
                                      format_lambda(lambda_grid[l]),
                                  0.0);
      for (int idx : val_idx) {
        Vector row = (Z.row(idx) * B).transpose();
        row = row.array().max(-kLinPredBound).min(kLinPredBound);
        const double mx = row.maxCoeff();
        const double lse = mx + std::log((row.array() - mx).exp().sum());
        cv_nll[l] += lse - row[labels[idx] - 1];
      }
    }
  }
  int best = 0;
  for (int l = 1; l < L; ++l)
    if (cv_nll[l] < cv_nll[best]) best = l;

  MultinomialProx solver{Z, Y, spec.alpha, spec.max_iter, spec.tol, lip};
  Matrix B = start_point(Y);
  for (int l = 0; l <= best; ++l)
    if (!solver.fit(lambda_grid[l], B))
      throw NonConvergenceError("elastic net (multinomial) failed at lambda=" +
                                    format_lambda(lambda_grid[l]),
                                0.0);
  m.coef = B;
  m.chosen_lambda = lambda_grid[best];
  return m;
}

}  // namespace mvt
