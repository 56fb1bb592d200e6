#include "lirex/explainer.hpp"

#include <algorithm>
#include <cctype>

namespace lirex {

namespace {

constexpr const char* kPremisePrefix = "Premise: ";
constexpr const char* kHypothesisPrefix = "Hypothesis: ";
constexpr const char* kExplanationPrefix = "Explanation:";

bool is_core_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '\'';
}

void require_single_line(const std::string& text, const char* what) {
  if (text.find('\n') != std::string::npos)
    throw FormatError(std::string(what) + " must not contain newlines");
}

}  // namespace

std::string bracket_word(const std::string& word) {
  std::size_t first = word.size(), last = 0;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (is_core_char(word[i])) {
      first = std::min(first, i);
      last = i;
    }
  }
  if (first == word.size()) return "[" + word + "]";
  return word.substr(0, first) + "[" + word.substr(first, last - first + 1) + "]" +
         word.substr(last + 1);
}

std::string apply_rationale_brackets(const std::string& hypothesis,
                                     const std::vector<int>& word_labels) {
  TokenSeq words = whitespace_words(hypothesis);
  if (words.size() != word_labels.size())
    throw FormatError("rationale has " + std::to_string(word_labels.size()) + " labels for " +
                      std::to_string(words.size()) + " words");
  std::string out;
  std::size_t consumed = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    out += hypothesis.substr(consumed, words[w].begin - consumed);
    out += word_labels[w] ? bracket_word(words[w].text) : words[w].text;
    consumed = words[w].end;
  }
  out += hypothesis.substr(consumed);
  return out;
}

std::string strip_brackets(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text)
    if (c != '[' && c != ']') out += c;
  return out;
}

std::vector<int> project_to_words(const std::string& hypothesis, const TokenSeq& hypothesis_seq,
                                  const RationaleMask& mask) {
  if (mask.size() != hypothesis_seq.size())
    throw ConsistencyError("rationale mask does not match the hypothesis sequence");
  TokenSeq words = whitespace_words(hypothesis);
  std::vector<int> labels(words.size(), 0);
  for (std::size_t w = 0; w < words.size(); ++w) {
    double prob = 0.0;
    for (std::size_t t = 0; t < hypothesis_seq.size(); ++t) {
      const Token& tok = hypothesis_seq[t];
      if (tok.separator) continue;
      if (tok.begin < words[w].end && tok.end > words[w].begin)
        prob = std::max(prob, mask.token_probs[t]);
    }
    labels[w] = prob > 0.5 ? 1 : 0;
  }
  return labels;
}

std::string build_prompt(const std::string& premise, const std::string& hypothesis,
                         const std::vector<int>& word_labels, const std::string& explanation) {
  require_single_line(premise, "premise");
  require_single_line(hypothesis, "hypothesis");
  require_single_line(explanation, "explanation");
  if (hypothesis.find('[') != std::string::npos || hypothesis.find(']') != std::string::npos)
    throw FormatError("hypothesis already contains brackets");
  std::string prompt = kPremisePrefix + premise + "\n" + kHypothesisPrefix +
                       apply_rationale_brackets(hypothesis, word_labels) + "\n" +
                       kExplanationPrefix;
  if (!explanation.empty()) prompt += " " + explanation;
  return prompt;
}

ParsedPrompt parse_prompt(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.size() != 3) throw FormatError("prompt must have exactly three lines");
  auto strip_prefix = [](const std::string& line, const std::string& prefix) {
    if (line.compare(0, prefix.size(), prefix) != 0)
      throw FormatError("prompt line missing prefix '" + prefix + "'");
    return line.substr(prefix.size());
  };

  ParsedPrompt parsed;
  parsed.premise = strip_prefix(lines[0], kPremisePrefix);
  parsed.bracketed_hypothesis = strip_prefix(lines[1], kHypothesisPrefix);
  if (lines[2] == kExplanationPrefix) {
    parsed.explanation.clear();
  } else {
    parsed.explanation = strip_prefix(lines[2], std::string(kExplanationPrefix) + " ");
  }

  parsed.hypothesis = strip_brackets(parsed.bracketed_hypothesis);
  TokenSeq bracketed_words = whitespace_words(parsed.bracketed_hypothesis);
  parsed.word_labels.resize(bracketed_words.size());
  for (std::size_t w = 0; w < bracketed_words.size(); ++w)
    parsed.word_labels[w] = bracketed_words[w].text.find('[') != std::string::npos ? 1 : 0;
  // Re-bracketing must reproduce the line exactly; rejects stray, nested,
  // or partial-core brackets.
  if (apply_rationale_brackets(parsed.hypothesis, parsed.word_labels) !=
      parsed.bracketed_hypothesis)
    throw FormatError("prompt hypothesis brackets are not word-aligned");
  return parsed;
}

FineTuneReport train_generator(GeneratorBackend& gen, const CorpusSplit& split,
                               const std::set<std::string>& held_out_ids,
                               const TrainingConfig& config) {
  std::vector<std::string> prompts;
  prompts.reserve(split.instances.size());
  for (const AnnotatedInstance& inst : split.instances) {
    if (held_out_ids.count(inst.base.instance_id))
      throw ConsistencyError("train_generator: instance '" + inst.base.instance_id +
                             "' is held out and must not reach generator training");
    if (inst.gold_explanation.empty())
      throw ConsistencyError("train_generator: instance '" + inst.base.instance_id +
                             "' has no gold explanation");
    TokenSeq words = whitespace_words(inst.base.hypothesis);
    std::vector<int> labels(words.size(), 0);
    for (const HighlightSpan& s : inst.highlight_spans)
      for (int w = s.start_word; w <= s.end_word && w < static_cast<int>(words.size()); ++w)
        labels[static_cast<std::size_t>(w)] = 1;
    prompts.push_back(
        build_prompt(inst.base.premise, inst.base.hypothesis, labels, inst.gold_explanation));
  }
  return fine_tune_lm(gen, prompts, config);
}

std::string generate_explanation(GeneratorBackend& gen, const std::string& premise,
                                 const std::string& hypothesis,
                                 const std::vector<int>& word_labels) {
  return greedy_decode(gen, build_prompt(premise, hypothesis, word_labels));
}

ExplanationTriple generate_triple(GeneratorBackend& gen, RationalizerModel& rationalizer,
                                  const NLIInstance& instance) {
  ExplanationTriple triple;
  triple.instance_id = instance.instance_id;
  TokenSeq hyp_seq = build_hypothesis_sequence(instance.hypothesis, rationalizer.encoder());
  for (Label label : kAllLabels) {
    int li = static_cast<int>(label);
    triple.rationale[li] = rationalizer.predict(instance, label);
    std::vector<int> words =
        project_to_words(instance.hypothesis, hyp_seq, triple.rationale[li]);
    std::string text = generate_explanation(gen, instance.premise, instance.hypothesis, words);
    if (text.empty()) {
      triple.explanation[li] = kEmptyExplanationSentinel;
      triple.empty_generation[li] = true;
    } else {
      triple.explanation[li] = text;
    }
  }
  triple.validate();
  return triple;
}

}  // namespace lirex
