#pragma once

#include <set>
#include <string>
#include <vector>

#include "lirex/backends.hpp"
#include "lirex/corpus.hpp"
#include "lirex/rationalizer.hpp"
#include "lirex/types.hpp"

namespace lirex {

// Wraps the alphanumeric core of a whitespace-delimited word in square
// brackets, leaving surrounding punctuation outside: "instrument." becomes
// "[instrument]." and "\"dog\"," becomes "\"[dog]\",". A word with no core
// is bracketed whole.
std::string bracket_word(const std::string& word);

// Rebuilds the hypothesis with every word whose label is 1 bracketed.
// word_labels must have one entry per whitespace-delimited word.
std::string apply_rationale_brackets(const std::string& hypothesis,
                                     const std::vector<int>& word_labels);

// Removes all square brackets; inverts apply_rationale_brackets exactly.
std::string strip_brackets(const std::string& text);

// Collapses a token-level mask over a separator-wrapped hypothesis sequence
// to word-level labels: a word's probability is the maximum over the tokens
// that overlap it, and its label is 1 iff that probability exceeds 0.5.
std::vector<int> project_to_words(const std::string& hypothesis, const TokenSeq& hypothesis_seq,
                                  const RationaleMask& mask);

// The generation prompt. Label-blind by construction: only the premise, the
// rationale-bracketed hypothesis, and (during training) the target
// explanation appear. Inputs must be single-line and the hypothesis must
// not already contain brackets (FormatError otherwise).
std::string build_prompt(const std::string& premise, const std::string& hypothesis,
                         const std::vector<int>& word_labels,
                         const std::string& explanation = "");

struct ParsedPrompt {
  std::string premise;
  std::string bracketed_hypothesis;
  std::string hypothesis;         // brackets stripped
  std::vector<int> word_labels;   // recovered from bracket placement
  std::string explanation;        // empty for an inference-time prompt
};

// Strict inverse of build_prompt: requires exactly three prefixed lines and
// per-word bracketing that re-bracketing reproduces (FormatError otherwise).
ParsedPrompt parse_prompt(const std::string& text);

// Fine-tunes the generator on gold-explanation prompts. Instances listed in
// held_out_ids (explanations that merely restate an input) must already be
// filtered out; finding one in the split is a ConsistencyError.
FineTuneReport train_generator(GeneratorBackend& gen, const CorpusSplit& split,
                               const std::set<std::string>& held_out_ids,
                               const TrainingConfig& config);

// Decodes an explanation for the bracketed hypothesis. Returns the raw
// decoded text; empty means the model produced nothing before the stop
// token.
std::string generate_explanation(GeneratorBackend& gen, const std::string& premise,
                                 const std::string& hypothesis,
                                 const std::vector<int>& word_labels);

// Produces one explanation per candidate label: rationale from the
// rationalizer conditioned on that label, then label-blind generation.
// Empty decodes are replaced by the sentinel text and flagged.
ExplanationTriple generate_triple(GeneratorBackend& gen, RationalizerModel& rationalizer,
                                  const NLIInstance& instance);

}  // namespace lirex
