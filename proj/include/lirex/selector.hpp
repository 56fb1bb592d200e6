#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lirex/backends.hpp"
#include "lirex/corpus.hpp"
#include "lirex/rng.hpp"
#include "lirex/types.hpp"

namespace lirex {

// Optional text segments of a classifier input, assembled in premise,
// hypothesis, explanation order. Empty segments are omitted.
struct SequenceParts {
  std::string premise;
  std::string hypothesis;
  std::string explanation;
};

// Separator-wrapped concatenation of the present segments:
// <s> premise <s> hypothesis <s> explanation <s> (present segments only).
// When the result exceeds the encoder budget, explanation tail tokens are
// dropped first, then premise tail tokens; the hypothesis is never cut
// (FormatError when it cannot fit on its own). All segments empty is a
// FormatError.
TokenSeq build_classifier_sequence(const SequenceParts& parts, const EncoderBackend& encoder);

// Three-way sentence classifier over the encoder's first-token vector:
// probs = softmax(tanh(h0 * U1^T) * U2). The same head architecture backs
// both explanation selection and final label inference.
class NLIClassifier {
 public:
  NLIClassifier(EncoderBackend& encoder, std::string name, std::uint64_t seed);

  EncoderBackend& encoder() { return encoder_; }
  const EncoderBackend& encoder() const { return encoder_; }
  const std::string& name() const { return name_; }

  // Builds 1x3 label logits on the caller's tape.
  nn::Var logits_on_tape(nn::Tape& tape, const TokenSeq& seq);

  LabelDistribution classify(const TokenSeq& seq);

  std::vector<nn::Parameter*> parameters() { return {&u1_, &u2_}; }
  std::vector<nn::Parameter*> all_parameters();  // encoder + head, checkpoint order

  nn::Parameter& u1() { return u1_; }
  nn::Parameter& u2() { return u2_; }

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  EncoderBackend& encoder_;
  std::string name_;
  nn::Parameter u1_;  // hidden x hidden
  nn::Parameter u2_;  // hidden x 3
  bool trained_ = false;
};

struct SelectorReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::vector<double> epoch_loss;
  double accuracy = 0.0;  // training split, after training
};

// Trains the selector head as a label classifier over
// (premise, hypothesis, gold explanation) inputs.
SelectorReport train_selector(NLIClassifier& selector, const CorpusSplit& split,
                              const TrainingConfig& config);

// Scores the three candidate explanations: component l is the selector's
// probability of label l when reading the explanation generated for label
// l, renormalized across candidates.
LabelDistribution selection_scores(NLIClassifier& selector, const NLIInstance& instance,
                                   const ExplanationTriple& triple);

// Highest-scoring candidate; ties resolve to the earliest label
// (entailment before neutral before contradiction).
Label select_max(const LabelDistribution& scores);

// Categorical draw proportional to the scores (cumulative walk over a
// single uniform variate).
Label select_sample(const LabelDistribution& scores, Rng& rng);

}  // namespace lirex
