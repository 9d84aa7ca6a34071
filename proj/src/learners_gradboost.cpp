#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvt/learners.hpp"

namespace mvt {

namespace {

constexpr int kMaxBins = 64;
constexpr double kMinChildHessian = 1e-3;
constexpr double kMinGain = 1e-12;
constexpr double kLeafClip = 10.0;
constexpr double kHessFloor = 1e-12;

// Quantile binning computed once per fit: bin edges are midpoints between
// adjacent distinct values, exact when a feature has few distinct values.
struct BinnedDesign {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> bins;  // n x p
  std::vector<std::vector<double>> thresholds;  // per feature, per cut
  int bin_count(int feature) const {
    return static_cast<int>(thresholds[feature].size()) + 1;
  }
};

BinnedDesign bin_features(const Matrix& X) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  BinnedDesign out;
  out.bins.resize(n, p);
  out.thresholds.resize(p);

  std::vector<double> sorted(n);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) sorted[i] = X(i, j);
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> distinct;
    for (int i = 0; i < n; ++i)
      if (i == 0 || sorted[i] != sorted[i - 1]) distinct.push_back(sorted[i]);

    std::vector<double>& cuts = out.thresholds[j];
    if (static_cast<int>(distinct.size()) <= kMaxBins) {
      for (std::size_t k = 0; k + 1 < distinct.size(); ++k)
        cuts.push_back(distinct[k] + 0.5 * (distinct[k + 1] - distinct[k]));
    } else {
      for (int b = 1; b < kMaxBins; ++b) {
        const int idx = static_cast<int>(
            static_cast<double>(b) * n / kMaxBins);
        const double cut = sorted[std::min(idx, n - 1)];
        if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
      }
    }
    for (int i = 0; i < n; ++i) {
      const double v = X(i, j);
      const int b = static_cast<int>(
          std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
      out.bins(i, j) = static_cast<std::uint8_t>(b);
    }
  }
  return out;
}

struct TreeBuilder {
  const BinnedDesign& design;
  const Vector& g;
  const Vector& h;
  int max_depth;
  Tree nodes;

  double leaf_value(double G, double H) const {
    return std::clamp(-G / std::max(H, kHessFloor), -kLeafClip, kLeafClip);
  }

  int build(std::vector<int>& idx, int lo, int hi, int depth) {
    double G = 0.0, H = 0.0;
    for (int i = lo; i < hi; ++i) {
      G += g[idx[i]];
      H += h[idx[i]];
    }

    const int node_id = static_cast<int>(nodes.size());
    nodes.push_back({});

    bool make_leaf = depth >= max_depth || hi - lo < 2;
    int best_feature = -1, best_bin = -1;
    double best_gain = kMinGain;

    if (!make_leaf) {
      const int p = static_cast<int>(design.thresholds.size());
      const double score_all = G * G / (H + kHessFloor);
      std::vector<double> bin_g(kMaxBins), bin_h(kMaxBins);
      for (int f = 0; f < p; ++f) {
        const int bins = design.bin_count(f);
        if (bins < 2) continue;
        std::fill(bin_g.begin(), bin_g.begin() + bins, 0.0);
        std::fill(bin_h.begin(), bin_h.begin() + bins, 0.0);
        for (int i = lo; i < hi; ++i) {
          const int b = design.bins(idx[i], f);
          bin_g[b] += g[idx[i]];
          bin_h[b] += h[idx[i]];
        }
        double GL = 0.0, HL = 0.0;
        for (int b = 0; b + 1 < bins; ++b) {
          GL += bin_g[b];
          HL += bin_h[b];
          const double GR = G - GL, HR = H - HL;
          if (HL < kMinChildHessian || HR < kMinChildHessian) continue;
          const double gain = GL * GL / (HL + kHessFloor) +
                              GR * GR / (HR + kHessFloor) - score_all;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            best_bin = b;
          }
        }
      }
      if (best_feature < 0) make_leaf = true;
    }

    if (make_leaf) {
      nodes[node_id].value = leaf_value(G, H);
      return node_id;
    }

    const auto mid = std::stable_partition(
        idx.begin() + lo, idx.begin() + hi,
        [&](int a) { return design.bins(a, best_feature) <= best_bin; });
    const int split = static_cast<int>(mid - idx.begin());

    nodes[node_id].feature = best_feature;
    nodes[node_id].threshold = design.thresholds[best_feature][best_bin];
    nodes[node_id].left = build(idx, lo, split, depth + 1);
    nodes[node_id].right = build(idx, split, hi, depth + 1);
    return node_id;
  }
};

Tree fit_tree(const BinnedDesign& design, const Vector& g, const Vector& h,
              int max_depth) {
  std::vector<int> idx(design.bins.rows());
  std::iota(idx.begin(), idx.end(), 0);
  TreeBuilder b{design, g, h, max_depth, {}};
  b.build(idx, 0, static_cast<int>(idx.size()), 0);
  return std::move(b.nodes);
}

double tree_predict(const Tree& tree, const Matrix& X, Index row) {
  int node = 0;
  while (tree[node].feature >= 0)
    node = X(row, tree[node].feature) < tree[node].threshold ? tree[node].left
                                                             : tree[node].right;
  return tree[node].value;
}

}  // namespace

FittedLearner fit_gradboost(const Matrix& X, const IntVector& labels,
                            int class_count, const LearnerSpec& spec) {
  spec.check();
  const Index n = X.rows();
  if (n < 20) throw Error("gradboost: need n >= 20");

  FittedLearner m;
  m.spec = spec;
  m.class_count = class_count;
  m.standardization = fit_standardization(X);

  Vector freq = Vector::Zero(class_count);
  for (Index i = 0; i < n; ++i) freq[labels[i] - 1] += 1.0;
  freq /= static_cast<double>(n);

  const bool binary = class_count == 2;
  const int score_cols = binary ? 1 : class_count;
  m.base_score.resize(score_cols);
  if (binary) {
    m.base_score[0] = logit(clamp_prob(freq[1], 1e-6));
  } else {
    for (int k = 0; k < class_count; ++k)
      m.base_score[k] = std::log(std::max(freq[k], 1e-6));
  }

  if ((freq.array() > 0).count() < 2) {
    m.constant_labels = true;
    return m;
  }

  const Matrix Xs = m.standardization.apply(X);
  const BinnedDesign design = bin_features(Xs);

  Matrix F(n, score_cols);
  for (int k = 0; k < score_cols; ++k) F.col(k).setConstant(m.base_score[k]);

  Matrix Y = Matrix::Zero(n, class_count);
  for (Index i = 0; i < n; ++i) Y(i, labels[i] - 1) = 1.0;

  m.rounds.reserve(spec.trees);
  for (int round = 0; round < spec.trees; ++round) {
    std::vector<Tree> stage;
    if (binary) {
      Vector g(n), h(n);
      for (Index i = 0; i < n; ++i) {
        const double p = expit(F(i, 0));
        g[i] = p - Y(i, 1);
        h[i] = std::max(p * (1.0 - p), kHessFloor);
      }
      Tree tree = fit_tree(design, g, h, spec.depth);
      for (Index i = 0; i < n; ++i)
        F(i, 0) += spec.learning_rate * tree_predict(tree, Xs, i);
      stage.push_back(std::move(tree));
    } else {
      Matrix P(n, class_count);
      for (Index i = 0; i < n; ++i) {
        Vector row = F.row(i).transpose();
        row = row.array().max(-kLinPredBound).min(kLinPredBound);
        const double mx = row.maxCoeff();
        Vector e = (row.array() - mx).exp();
        P.row(i) = (e / e.sum()).transpose();
      }
      for (int k = 0; k < class_count; ++k) {
        Vector g = P.col(k) - Y.col(k);
        Vector h =
            (P.col(k).array() * (1.0 - P.col(k).array())).max(kHessFloor);
        Tree tree = fit_tree(design, g, h, spec.depth);
        for (Index i = 0; i < n; ++i)
          F(i, k) += spec.learning_rate * tree_predict(tree, Xs, i);
        stage.push_back(std::move(tree));
      }
    }
    m.rounds.push_back(std::move(stage));
  }
  return m;
}

}  // namespace mvt
