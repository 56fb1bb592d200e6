#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "lirex/errors.hpp"

namespace lirex {

// ------------------------------ labels ------------------------------

enum class Label : int { entailment = 0, neutral = 1, contradiction = 2 };

inline constexpr std::array<Label, 3> kAllLabels = {Label::entailment, Label::neutral,
                                                    Label::contradiction};
inline constexpr int kNumLabels = 3;

const std::string& to_string(Label l);
Label label_from_string(const std::string& s);  // throws FormatError on unknown text
bool is_label_string(const std::string& s);

// ------------------------------ instances ------------------------------

struct NLIInstance {
  std::string instance_id;
  std::string premise;
  std::string hypothesis;
  Label gold_label = Label::entailment;

  // Throws ConsistencyError if premise/hypothesis are empty after trimming.
  void validate() const;
};

// Inclusive range of whitespace-delimited hypothesis word indices.
struct HighlightSpan {
  int start_word = 0;
  int end_word = 0;
};

// An NLI instance optionally carrying human rationale highlights and a
// free-text explanation. Plain (unannotated) instances leave both empty.
struct AnnotatedInstance {
  NLIInstance base;
  std::vector<HighlightSpan> highlight_spans;
  std::string gold_explanation;

  bool is_annotated() const { return !gold_explanation.empty() || !highlight_spans.empty(); }
};

// ------------------------------ tokens ------------------------------

// A token paired with its character span [begin, end) in the source text.
// Separator tokens are structural and carry no span.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool separator = false;
};

using TokenSeq = std::vector<Token>;

// ------------------------------ masks ------------------------------

// Per-token binary rationale decisions with the underlying probabilities.
struct RationaleMask {
  std::vector<int> token_labels;     // each 0 or 1
  std::vector<double> token_probs;   // each in [0, 1]

  std::size_t size() const { return token_labels.size(); }
  // Enforces: sizes match, labels binary, probs in range, label==1 iff prob>0.5.
  void validate() const;
};

// ------------------------------ distributions ------------------------------

// Probability distribution over the three labels, indexed by Label.
struct LabelDistribution {
  std::array<double, 3> probs = {0.0, 0.0, 0.0};

  double operator[](Label l) const { return probs[static_cast<int>(l)]; }
  // Enforces: components in [0,1], sum within 1e-6 of 1.
  void validate() const;
  // First label attaining the maximum (entailment < neutral < contradiction).
  Label argmax() const;
};

// Soft training target over labels (same validity rules as a distribution).
struct SoftTarget {
  LabelDistribution dist;
};

// ------------------------------ explanations ------------------------------

// One candidate explanation per label, plus the rationale mask that
// conditioned it and a flag marking instances where decoding came back empty
// and the sentinel text was substituted.
struct ExplanationTriple {
  std::string instance_id;
  std::array<std::string, 3> explanation;   // indexed by Label
  std::array<RationaleMask, 3> rationale;   // indexed by Label
  std::array<bool, 3> empty_generation = {false, false, false};

  const std::string& for_label(Label l) const { return explanation[static_cast<int>(l)]; }
  // Enforces all three explanations non-empty.
  void validate() const;
};

inline constexpr const char* kEmptyExplanationSentinel = "no explanation";

// ------------------------------ json ------------------------------

nlohmann::json to_json(const AnnotatedInstance& inst);
AnnotatedInstance instance_from_json(const nlohmann::json& j);

}  // namespace lirex
