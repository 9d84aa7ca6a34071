#include "mvt/learners.hpp"

namespace mvt {

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

const char* kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::BinomialGlm: return "binomial_glm";
    case LearnerKind::MultinomialGlm: return "multinomial_glm";
    case LearnerKind::ElasticNet: return "elastic_net";
    case LearnerKind::GradBoost: return "grad_boost";
  }
  return "?";
}

}  // namespace

void to_json(nlohmann::json& j, const FittedLearner& m) {
  j["kind"] = kind_name(m.spec.kind);
  j["name"] = m.spec.name();
  j["class_count"] = m.class_count;
  j["standardization"] = {{"mean", vector_to_json(m.standardization.mean)},
                          {"scale", vector_to_json(m.standardization.scale)}};
  switch (m.spec.kind) {
    case LearnerKind::BinomialGlm:
    case LearnerKind::MultinomialGlm:
      j["coef"] = matrix_to_json(m.coef);
      break;
    case LearnerKind::ElasticNet:
      j["alpha"] = m.spec.alpha;
      j["lambda"] = m.chosen_lambda;
      j["coef"] = matrix_to_json(m.coef);
      break;
    case LearnerKind::GradBoost: {
      j["trees"] = m.spec.trees;
      j["depth"] = m.spec.depth;
      j["learning_rate"] = m.spec.learning_rate;
      j["base_score"] = vector_to_json(m.base_score);
      j["constant_labels"] = m.constant_labels;
      nlohmann::json rounds = nlohmann::json::array();
      for (const auto& stage : m.rounds) {
        nlohmann::json stage_json = nlohmann::json::array();
        for (const auto& tree : stage) {
          nlohmann::json nodes = nlohmann::json::array();
          for (const auto& node : tree)
            nodes.push_back({{"feature", node.feature},
                             {"threshold", node.threshold},
                             {"left", node.left},
                             {"right", node.right},
                             {"value", node.value}});
          stage_json.push_back(nodes);
        }
        rounds.push_back(stage_json);
      }
      j["rounds"] = rounds;
      break;
    }
  }
}

}  // namespace mvt
