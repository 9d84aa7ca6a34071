#include <algorithm>
#include <cmath>

#include "mvt/learners.hpp"

namespace mvt {

std::string LearnerSpec::name() const {
  switch (kind) {
    case LearnerKind::BinomialGlm: return "glm_binomial";
    case LearnerKind::MultinomialGlm: return "glm_multinomial";
    case LearnerKind::ElasticNet: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "enet_a%.2f", alpha);
      return buf;
    }
    case LearnerKind::GradBoost:
      return "gradboost_t" + std::to_string(trees) + "_d" + std::to_string(depth);
  }
  return "unknown";
}

void LearnerSpec::check() const {
  if (alpha < 0.0 || alpha > 1.0) throw Error("elastic net alpha outside [0,1]");
  if (tol <= 0.0) throw Error("tol must be positive");
  if (trees < 1 || depth < 1) throw Error("trees and depth must be >= 1");
  if (max_iter < 1) throw Error("max_iter must be >= 1");
}

LearnerSpec LearnerSpec::binomial_glm() {
  LearnerSpec s;
  s.kind = LearnerKind::BinomialGlm;
  return s;
}
LearnerSpec LearnerSpec::multinomial_glm() {
  LearnerSpec s;
  s.kind = LearnerKind::MultinomialGlm;
  return s;
}
LearnerSpec LearnerSpec::elastic_net(double alpha) {
  LearnerSpec s;
  s.kind = LearnerKind::ElasticNet;
  s.alpha = alpha;
  s.max_iter = 500;
  s.tol = 1e-7;
  return s;
}
LearnerSpec LearnerSpec::grad_boost(int trees, int depth, double learning_rate) {
  LearnerSpec s;
  s.kind = LearnerKind::GradBoost;
  s.trees = trees;
  s.depth = depth;
  s.learning_rate = learning_rate;
  return s;
}

Matrix Standardization::apply(const Matrix& X) const {
  Matrix out = X;
  for (Index j = 0; j < X.cols(); ++j)
    out.col(j) = (X.col(j).array() - mean[j]) / scale[j];
  return out;
}

Standardization fit_standardization(const Matrix& X) {
  const Index p = X.cols();
  Standardization s;
  s.mean = Vector::Zero(p);
  s.scale = Vector::Ones(p);
  const Index n = X.rows();
  for (Index j = 0; j < p; ++j) {
    bool binary = true;
    for (Index i = 0; i < n && binary; ++i)
      binary = (X(i, j) == 0.0 || X(i, j) == 1.0);
    if (binary) continue;
    const double m = X.col(j).mean();
    const double sd = std::sqrt((X.col(j).array() - m).square().sum() /
                                std::max<double>(1.0, static_cast<double>(n - 1)));
    s.mean[j] = m;
    if (sd > 0.0) s.scale[j] = sd;
  }
  return s;
}

namespace {

Matrix with_intercept(const Matrix& X) {
  Matrix Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  if (X.cols() > 0) Z.rightCols(X.cols()) = X;
  return Z;
}

Vector clip_linpred(const Vector& eta) {
  return eta.array().max(-kLinPredBound).min(kLinPredBound);
}

// row-wise softmax over class scores, with clipping
Matrix softmax_rows(const Matrix& scores) {
  Matrix P(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    Vector row = scores.row(i).transpose();
    row = row.array().max(-kLinPredBound).min(kLinPredBound);
    const double m = row.maxCoeff();
    Vector e = (row.array() - m).exp();
    P.row(i) = (e / e.sum()).transpose();
  }
  return P;
}

}  // namespace

double binomial_nll(const Matrix& Z, const Vector& y, const Vector& beta) {
  const Vector eta = clip_linpred(Z * beta);
  double nll = 0.0;
  for (Index i = 0; i < Z.rows(); ++i)
    nll += std::log1p(std::exp(-std::abs(eta[i]))) +
           (eta[i] > 0 ? (1.0 - y[i]) * eta[i] : -y[i] * eta[i]);
  return nll;
}

Vector binomial_nll_gradient(const Matrix& Z, const Vector& y, const Vector& beta) {
  const Vector eta = clip_linpred(Z * beta);
  Vector p(eta.size());
  for (Index i = 0; i < eta.size(); ++i) p[i] = expit(eta[i]);
  return Z.transpose() * (p - y);
}

double multinomial_nll(const Matrix& Z, const IntVector& labels, const Matrix& B) {
  const Index n = Z.rows();
  Matrix scores(n, B.cols() + 1);
  scores.col(0).setZero();
  scores.rightCols(B.cols()) = Z * B;
  double nll = 0.0;
  for (Index i = 0; i < n; ++i) {
    Vector row = scores.row(i).transpose();
    row = row.array().max(-kLinPredBound).min(kLinPredBound);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    nll += lse - row[labels[i] - 1];
  }
  return nll;
}

Matrix multinomial_nll_gradient(const Matrix& Z, const IntVector& labels,
                                const Matrix& B) {
  const Index n = Z.rows();
  const Index km1 = B.cols();
  Matrix scores(n, km1 + 1);
  scores.col(0).setZero();
  scores.rightCols(km1) = Z * B;
  const Matrix P = softmax_rows(scores);
  Matrix R = P.rightCols(km1);  // residual p_k - 1(label == k), k = 2..K
  for (Index i = 0; i < n; ++i)
    if (labels[i] >= 2) R(i, labels[i] - 2) -= 1.0;
  return Z.transpose() * R;
}

FittedLearner fit_binomial_glm(const Matrix& X, const Vector& y,
                               const LearnerSpec& spec) {
  spec.check();
  const Index n = X.rows();
  if (n <= X.cols() + 1) throw Error("binomial glm: need n > p + 1");
  const double ymean = y.mean();
  if (ymean <= 0.0 || ymean >= 1.0)
    throw Error("binomial glm: outcome is constant");

  FittedLearner m;
  m.spec = spec;
  m.class_count = 2;
  m.standardization = fit_standardization(X);
  const Matrix Z = with_intercept(m.standardization.apply(X));
  const Index q = Z.cols();

  Vector beta = Vector::Zero(q);
  beta[0] = logit(ymean);
  double nll = binomial_nll(Z, y, beta);
  double grad_norm = binomial_nll_gradient(Z, y, beta).lpNorm<Eigen::Infinity>();
  m.nll_path.push_back(nll);

  double damping = 0.0;
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    const Vector eta = clip_linpred(Z * beta);
    Vector p(n), w(n);
    for (Index i = 0; i < n; ++i) {
      p[i] = expit(eta[i]);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-10);
    }
    const Vector grad = Z.transpose() * (p - y);
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (grad_norm <= spec.tol) break;

    Matrix H = Z.transpose() * w.asDiagonal() * Z;
    const double ridge_unit = H.trace() / q;
    if (iter == 0 && Eigen::LLT<Matrix>(H).info() != Eigen::Success)
      throw Error("binomial glm: rank-deficient design");

    // damped Newton: escalate the ridge if the line search cannot improve
    bool improved = false;
    const double slack = 1e-10 * (1.0 + std::abs(nll));
    for (int attempt = 0; attempt < 8 && !improved; ++attempt) {
      Matrix Hd = H;
      Hd.diagonal().array() += damping * ridge_unit + 1e-12 * ridge_unit;
      Eigen::LLT<Matrix> llt(Hd);
      if (llt.info() != Eigen::Success) {
        damping = std::max(damping * 10.0, 1e-8);
        continue;
      }
      const Vector step = llt.solve(grad);
      double scale = 1.0;
      for (int half = 0; half < 30; ++half) {
        const Vector cand = beta - scale * step;
        const double cand_nll = binomial_nll(Z, y, cand);
        if (cand_nll <= nll + slack) {
          beta = cand;
          nll = cand_nll;
          m.nll_path.push_back(nll);
          improved = true;
          break;
        }
        scale *= 0.5;
      }
      if (!improved) damping = std::max(damping * 10.0, 1e-8);
    }
    if (!improved) break;  // NLL cannot move in double precision
    damping *= 0.1;
  }

  // quasi-separated fits stall at the numerical floor with a tiny but
  // nonzero gradient; accept those, reject anything genuinely unconverged
  const double grad_floor = 1e-6 * (1.0 + std::abs(nll));
  // complete separation: saturated predictors with an essentially perfect fit
  const Vector eta = Z * beta;
  const bool separated =
      eta.cwiseAbs().maxCoeff() >= kLinPredBound - 0.5 && nll < 1e-3;
  if (grad_norm > std::max(spec.tol, grad_floor) || separated)
    throw NonConvergenceError(
        "binomial glm did not converge (separation suspected), gradient norm " +
            std::to_string(grad_norm),
        grad_norm);

  m.coef = beta;
  return m;
}

FittedLearner fit_multinomial_glm(const Matrix& X, const IntVector& labels,
                                  int class_count, const LearnerSpec& spec) {
  spec.check();
  const Index n = X.rows();
  if (n <= X.cols() + 1) throw Error("multinomial glm: need n > p + 1");
  if (class_count < 2) throw Error("multinomial glm: need J >= 2");
  Vector counts = Vector::Zero(class_count);
  for (Index i = 0; i < n; ++i) counts[labels[i] - 1] += 1.0;
  if ((counts.array() > 0).count() < 2)
    throw Error("multinomial glm: fewer than 2 observed classes");

  FittedLearner m;
  m.spec = spec;
  m.class_count = class_count;
  m.standardization = fit_standardization(X);
  const Matrix Z = with_intercept(m.standardization.apply(X));
  const Index q = Z.cols();
  const Index km1 = class_count - 1;

  // start from the intercept-only MLE (log odds vs class 1)
  Matrix B = Matrix::Zero(q, km1);
  const double c1 = std::max(counts[0], 0.5);
  for (Index k = 0; k < km1; ++k)
    B(0, k) = std::log(std::max(counts[k + 1], 0.5) / c1);

  double nll = multinomial_nll(Z, labels, B);
  double grad_norm =
      multinomial_nll_gradient(Z, labels, B).lpNorm<Eigen::Infinity>();
  m.nll_path.push_back(nll);

  double damping = 0.0;
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    Matrix scores(n, class_count);
    scores.col(0).setZero();
    scores.rightCols(km1) = Z * B;
    const Matrix P = softmax_rows(scores);

    Matrix G = multinomial_nll_gradient(Z, labels, B);
    grad_norm = G.lpNorm<Eigen::Infinity>();
    if (grad_norm <= spec.tol) break;

    // Hessian blocks H[(k,l)] = Z' diag(p_k (1(k==l) - p_l)) Z
    Matrix H(q * km1, q * km1);
    for (Index k = 0; k < km1; ++k) {
      for (Index l = k; l < km1; ++l) {
        Vector w;
        if (k == l)
          w = P.col(k + 1).array() * (1.0 - P.col(k + 1).array());
        else
          w = -P.col(k + 1).array() * P.col(l + 1).array();
        const Matrix block = Z.transpose() * w.asDiagonal() * Z;
        H.block(k * q, l * q, q, q) = block;
        if (l != k) H.block(l * q, k * q, q, q) = block.transpose();
      }
    }
    const double ridge_unit = H.trace() / (q * km1);
    if (iter == 0 && Eigen::LLT<Matrix>(H).info() != Eigen::Success)
      throw Error("multinomial glm: rank-deficient design");

    bool improved = false;
    const double slack = 1e-10 * (1.0 + std::abs(nll));
    const Vector g = Eigen::Map<const Vector>(G.data(), G.size());
    for (int attempt = 0; attempt < 8 && !improved; ++attempt) {
      Matrix Hd = H;
      Hd.diagonal().array() += damping * ridge_unit + 1e-12 * ridge_unit;
      Eigen::LLT<Matrix> llt(Hd);
      if (llt.info() != Eigen::Success) {
        damping = std::max(damping * 10.0, 1e-8);
        continue;
      }
      const Vector step_vec = llt.solve(g);
      const Matrix step = Eigen::Map<const Matrix>(step_vec.data(), q, km1);
      double scale = 1.0;
      for (int half = 0; half < 30; ++half) {
        const Matrix cand = B - scale * step;
        const double cand_nll = multinomial_nll(Z, labels, cand);
        if (cand_nll <= nll + slack) {
          B = cand;
          nll = cand_nll;
          m.nll_path.push_back(nll);
          improved = true;
          break;
        }
        scale *= 0.5;
      }
      if (!improved) damping = std::max(damping * 10.0, 1e-8);
    }
    if (!improved) break;  // NLL cannot move in double precision
    damping *= 0.1;
  }

  // quasi-separated fits stall at the numerical floor with a tiny but
  // nonzero gradient; accept those, reject anything genuinely unconverged
  const double grad_floor = 1e-6 * (1.0 + std::abs(nll));
  // complete separation: saturated predictors with an essentially perfect fit
  const Matrix eta = Z * B;
  const bool separated =
      eta.cwiseAbs().maxCoeff() >= kLinPredBound - 0.5 && nll < 1e-3;
  if (grad_norm > std::max(spec.tol, grad_floor) || separated)
    throw NonConvergenceError(
        "multinomial glm did not converge (separation suspected), gradient norm " +
            std::to_string(grad_norm),
        grad_norm);

  m.coef = Matrix::Zero(q, class_count);
  m.coef.rightCols(km1) = B;
  return m;
}

Matrix predict_proba(const FittedLearner& m, const Matrix& X) {
  const Matrix Xs = m.standardization.apply(X);
  const Index n = X.rows();
  Matrix P;

  switch (m.spec.kind) {
    case LearnerKind::BinomialGlm: {
      if (X.cols() + 1 != m.coef.rows())
        throw Error("predict: covariate count mismatch");
      const Vector eta = clip_linpred(with_intercept(Xs) * m.coef.col(0));
      P.resize(n, 2);
      for (Index i = 0; i < n; ++i) {
        P(i, 1) = expit(eta[i]);
        P(i, 0) = 1.0 - P(i, 1);
      }
      break;
    }
    case LearnerKind::MultinomialGlm:
    case LearnerKind::ElasticNet: {
      if (m.class_count == 2 && m.spec.kind == LearnerKind::ElasticNet) {
        if (X.cols() + 1 != m.coef.rows())
          throw Error("predict: covariate count mismatch");
        const Vector eta = clip_linpred(with_intercept(Xs) * m.coef.col(0));
        P.resize(n, 2);
        for (Index i = 0; i < n; ++i) {
          P(i, 1) = expit(eta[i]);
          P(i, 0) = 1.0 - P(i, 1);
        }
        break;
      }
      if (X.cols() + 1 != m.coef.rows())
        throw Error("predict: covariate count mismatch");
      P = softmax_rows(with_intercept(Xs) * m.coef);
      break;
    }
    case LearnerKind::GradBoost: {
      const int K = m.class_count;
      Matrix scores(n, K == 2 ? 1 : K);
      for (Index k = 0; k < scores.cols(); ++k)
        scores.col(k).setConstant(m.base_score[k]);
      for (const auto& round : m.rounds) {
        for (std::size_t k = 0; k < round.size(); ++k) {
          const Tree& tree = round[k];
          for (Index i = 0; i < n; ++i) {
            int node = 0;
            while (tree[node].feature >= 0) {
              if (tree[node].feature >= Xs.cols())
                throw Error("predict: covariate count mismatch");
              node = Xs(i, tree[node].feature) < tree[node].threshold
                         ? tree[node].left
                         : tree[node].right;
            }
            scores(i, k) += m.spec.learning_rate * tree[node].value;
          }
        }
      }
      if (K == 2) {
        P.resize(n, 2);
        for (Index i = 0; i < n; ++i) {
          P(i, 1) = expit(scores(i, 0));
          P(i, 0) = 1.0 - P(i, 1);
        }
      } else {
        P = softmax_rows(scores);
      }
      break;
    }
  }

  P = P.array().max(kProbClamp).min(1.0 - kProbClamp).matrix();
  return P;
}

double mean_nll(const Matrix& probs, const IntVector& labels) {
  double nll = 0.0;
  for (Index i = 0; i < labels.size(); ++i)
    nll -= std::log(clamp_prob(probs(i, labels[i] - 1)));
  return nll / static_cast<double>(labels.size());
}

FittedLearner fit_learner(const LearnerSpec& spec, const Matrix& X,
                          const IntVector& labels, int class_count) {
  switch (spec.kind) {
    case LearnerKind::BinomialGlm: {
      Vector y(labels.size());
      for (Index i = 0; i < labels.size(); ++i) y[i] = labels[i] == 2 ? 1.0 : 0.0;
      return fit_binomial_glm(X, y, spec);
    }
    case LearnerKind::MultinomialGlm:
      return fit_multinomial_glm(X, labels, class_count, spec);
    case LearnerKind::ElasticNet:
      return fit_elastic_net(X, labels, class_count, spec);
    case LearnerKind::GradBoost:
      return fit_gradboost(X, labels, class_count, spec);
  }
  throw Error("unknown learner kind");
}

}  // namespace mvt
