#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lirex/backends.hpp"
#include "lirex/selector.hpp"
#include "lirex/types.hpp"

namespace lirex {

// What the final label classifier reads: the instance pair alone, the
// selected explanation alone, or both.
enum class InferenceMode { base, expl, all };

const std::string& to_string(InferenceMode mode);
InferenceMode inference_mode_from_string(const std::string& s);  // FormatError on unknown text

// Raw text handed to the inference classifier. Exactly the fields the mode
// consumes must be non-empty: premise+hypothesis for base,
// explanation for expl, all three for all (FormatError otherwise).
struct InferenceInput {
  std::string premise;
  std::string hypothesis;
  std::string explanation;

  void validate(InferenceMode mode) const;
};

// Separator-wrapped input for the mode:
//   base: <s> premise <s> hypothesis <s>
//   expl: <s> explanation <s>
//   all:  <s> premise <s> hypothesis <s> explanation <s>
// Over-budget sequences lose explanation tail tokens first, then premise
// tail tokens; the hypothesis is never cut.
TokenSeq build_inference_sequence(const InferenceInput& input, InferenceMode mode,
                                  const EncoderBackend& encoder);

// Cross entropy of a predicted distribution against a soft target:
// -sum_l target_l * log(max(predicted_l, 1e-12)). Both inputs are validated.
double soft_cross_entropy(const LabelDistribution& predicted, const LabelDistribution& target);

// How the training loop picks one of the three candidate explanations.
enum class SelectionStrategy { max, prob };

const std::string& to_string(SelectionStrategy strategy);
SelectionStrategy selection_strategy_from_string(const std::string& s);

// One training example: the instance, its candidate explanations, the
// selector's scores over them, and a soft label target.
struct InferenceExample {
  NLIInstance instance;
  ExplanationTriple triple;
  LabelDistribution selection;
  SoftTarget target;
};

struct InferenceReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::vector<double> epoch_loss;
  double accuracy = 0.0;  // argmax vs target argmax, training examples, after training
};

// Trains the classifier against soft targets. Under the max strategy every
// epoch uses the top-scoring explanation; under prob each epoch redraws one
// explanation per example from the selection scores (a fresh stream per
// epoch), exposing the model to plausible alternatives. Reported losses
// always use the max-strategy explanations so epochs are comparable.
InferenceReport train_inference(NLIClassifier& model, const std::vector<InferenceExample>& examples,
                                InferenceMode mode, SelectionStrategy strategy,
                                const TrainingConfig& config);

// Label distribution for one input under the trained classifier.
LabelDistribution predict_label(NLIClassifier& model, const InferenceInput& input,
                                InferenceMode mode);

}  // namespace lirex
