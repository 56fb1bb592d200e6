#include "lirex/types.hpp"

#include <cctype>
#include <cmath>

namespace lirex {

const std::string& to_string(Label l) {
  static const std::array<std::string, 3> names = {"entailment", "neutral", "contradiction"};
  return names[static_cast<int>(l)];
}

Label label_from_string(const std::string& s) {
  if (s == "entailment") return Label::entailment;
  if (s == "neutral") return Label::neutral;
  if (s == "contradiction") return Label::contradiction;
  throw FormatError("unknown label text: '" + s + "'");
}

bool is_label_string(const std::string& s) {
  return s == "entailment" || s == "neutral" || s == "contradiction";
}

namespace {
bool all_whitespace(const std::string& s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}
}  // namespace

void NLIInstance::validate() const {
  if (premise.empty() || all_whitespace(premise))
    throw ConsistencyError("instance '" + instance_id + "': empty premise");
  if (hypothesis.empty() || all_whitespace(hypothesis))
    throw ConsistencyError("instance '" + instance_id + "': empty hypothesis");
}

void RationaleMask::validate() const {
  if (token_labels.size() != token_probs.size())
    throw ConsistencyError("rationale mask: label/probability length mismatch");
  for (std::size_t i = 0; i < token_labels.size(); ++i) {
    int l = token_labels[i];
    double p = token_probs[i];
    if (l != 0 && l != 1) throw ConsistencyError("rationale mask: non-binary label");
    if (!(p >= 0.0 && p <= 1.0)) throw ConsistencyError("rationale mask: probability out of range");
    if ((p > 0.5) != (l == 1))
      throw ConsistencyError("rationale mask: label does not match thresholded probability");
  }
}

void LabelDistribution::validate() const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-9 && p <= 1.0 + 1e-9))
      throw ConsistencyError("label distribution: component out of [0,1]");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw ConsistencyError("label distribution: components do not sum to 1");
}

Label LabelDistribution::argmax() const {
  int best = 0;
  for (int i = 1; i < kNumLabels; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<Label>(best);
}

void ExplanationTriple::validate() const {
  for (int i = 0; i < kNumLabels; ++i) {
    if (explanation[i].empty())
      throw ConsistencyError("explanation triple '" + instance_id + "': empty explanation for " +
                             to_string(static_cast<Label>(i)));
  }
}

nlohmann::json to_json(const AnnotatedInstance& inst) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : inst.highlight_spans) spans.push_back({s.start_word, s.end_word});
  return nlohmann::json{{"instance_id", inst.base.instance_id},
                        {"premise", inst.base.premise},
                        {"hypothesis", inst.base.hypothesis},
                        {"gold_label", to_string(inst.base.gold_label)},
                        {"highlight_spans", spans},
                        {"gold_explanation", inst.gold_explanation}};
}

AnnotatedInstance instance_from_json(const nlohmann::json& j) {
  AnnotatedInstance inst;
  inst.base.instance_id = j.at("instance_id").get<std::string>();
  inst.base.premise = j.at("premise").get<std::string>();
  inst.base.hypothesis = j.at("hypothesis").get<std::string>();
  inst.base.gold_label = label_from_string(j.at("gold_label").get<std::string>());
  for (const auto& s : j.at("highlight_spans")) {
    inst.highlight_spans.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  }
  inst.gold_explanation = j.at("gold_explanation").get<std::string>();
  return inst;
}

}  // namespace lirex
