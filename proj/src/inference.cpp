#include "lirex/inference.hpp"

#include <algorithm>
#include <cmath>

#include "lirex/nn/optimizer.hpp"
#include "lirex/rng.hpp"

namespace lirex {

const std::string& to_string(InferenceMode mode) {
  static const std::string kNames[] = {"base", "expl", "all"};
  return kNames[static_cast<int>(mode)];
}

InferenceMode inference_mode_from_string(const std::string& s) {
  if (s == "base") return InferenceMode::base;
  if (s == "expl") return InferenceMode::expl;
  if (s == "all") return InferenceMode::all;
  throw FormatError("unknown inference mode '" + s + "' (expected base, expl, or all)");
}

const std::string& to_string(SelectionStrategy strategy) {
  static const std::string kNames[] = {"max", "prob"};
  return kNames[static_cast<int>(strategy)];
}

SelectionStrategy selection_strategy_from_string(const std::string& s) {
  if (s == "max") return SelectionStrategy::max;
  if (s == "prob") return SelectionStrategy::prob;
  throw FormatError("unknown selection strategy '" + s + "' (expected max or prob)");
}

void InferenceInput::validate(InferenceMode mode) const {
  bool want_pair = mode != InferenceMode::expl;
  bool want_expl = mode != InferenceMode::base;
  if (want_pair && (premise.empty() || hypothesis.empty()))
    throw FormatError(to_string(mode) + " inference requires a premise and a hypothesis");
  if (!want_pair && !(premise.empty() && hypothesis.empty()))
    throw FormatError(to_string(mode) + " inference must not receive a premise or hypothesis");
  if (want_expl && explanation.empty())
    throw FormatError(to_string(mode) + " inference requires an explanation");
  if (!want_expl && !explanation.empty())
    throw FormatError(to_string(mode) + " inference must not receive an explanation");
}

TokenSeq build_inference_sequence(const InferenceInput& input, InferenceMode mode,
                                  const EncoderBackend& encoder) {
  input.validate(mode);
  SequenceParts parts;
  if (mode != InferenceMode::expl) {
    parts.premise = input.premise;
    parts.hypothesis = input.hypothesis;
  }
  if (mode != InferenceMode::base) parts.explanation = input.explanation;
  return build_classifier_sequence(parts, encoder);
}

double soft_cross_entropy(const LabelDistribution& predicted, const LabelDistribution& target) {
  predicted.validate();
  target.validate();
  double loss = 0.0;
  for (int l = 0; l < kNumLabels; ++l)
    loss -= target.probs[l] * std::log(std::max(predicted.probs[l], 1e-12));
  return loss;
}

namespace {

InferenceInput input_for(const InferenceExample& example, InferenceMode mode, Label chosen) {
  InferenceInput input;
  if (mode != InferenceMode::expl) {
    input.premise = example.instance.premise;
    input.hypothesis = example.instance.hypothesis;
  }
  if (mode != InferenceMode::base) input.explanation = example.triple.for_label(chosen);
  return input;
}

nn::Matrix target_row(const SoftTarget& target) {
  nn::Matrix row(1, kNumLabels);
  for (int l = 0; l < kNumLabels; ++l) row(0, l) = target.dist.probs[l];
  return row;
}

}  // namespace

InferenceReport train_inference(NLIClassifier& model,
                                const std::vector<InferenceExample>& examples,
                                InferenceMode mode, SelectionStrategy strategy,
                                const TrainingConfig& config) {
  config.validate();
  if (examples.empty()) throw ConfigError("train_inference: no training examples");
  for (const InferenceExample& ex : examples) {
    ex.instance.validate();
    ex.target.dist.validate();
    if (mode != InferenceMode::base) {
      ex.triple.validate();
      ex.selection.validate();
    }
  }

  EncoderBackend& enc = model.encoder();
  auto sequence_for = [&](const InferenceExample& ex, Label chosen) {
    return build_inference_sequence(input_for(ex, mode, chosen), mode, enc);
  };

  // Comparable evaluation path: always the top-scoring explanation.
  auto mean_loss = [&]() {
    double total = 0.0;
    for (const InferenceExample& ex : examples) {
      nn::Tape tape(false);
      nn::Var loss = tape.soft_xent_with_logits(
          model.logits_on_tape(tape, sequence_for(ex, select_max(ex.selection))),
          target_row(ex.target));
      total += tape.value(loss)(0, 0);
    }
    return total / static_cast<double>(examples.size());
  };

  InferenceReport report;
  report.loss_before = mean_loss();

  std::vector<nn::Parameter*> params = model.all_parameters();
  nn::Adam opt(params, config.learning_rate);
  Rng rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fresh draw of explanations for this epoch under the prob strategy.
    std::vector<Label> chosen(examples.size(), Label::entailment);
    Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = 0; i < examples.size(); ++i)
      chosen[i] = strategy == SelectionStrategy::max
                      ? select_max(examples[i].selection)
                      : select_sample(examples[i].selection, epoch_rng);

    rng.shuffle(order);
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t batch_end = std::min(order.size(), i + config.batch_size);
      int in_batch = 0;
      opt.zero_grad();
      for (; i < batch_end; ++i) {
        const InferenceExample& ex = examples[order[i]];
        nn::Tape tape;
        nn::Var loss = tape.soft_xent_with_logits(
            model.logits_on_tape(tape, sequence_for(ex, chosen[order[i]])), target_row(ex.target));
        tape.backward(loss);
        ++in_batch;
      }
      if (in_batch > 0) {
        for (nn::Parameter* p : params) p->grad /= in_batch;
        opt.step();
      }
    }
    report.epoch_loss.push_back(mean_loss());
  }
  report.loss_after = report.epoch_loss.back();

  std::size_t correct = 0;
  for (const InferenceExample& ex : examples) {
    LabelDistribution dist =
        predict_label(model, input_for(ex, mode, select_max(ex.selection)), mode);
    correct += dist.argmax() == ex.target.dist.argmax() ? 1 : 0;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());

  model.mark_trained();
  return report;
}

LabelDistribution predict_label(NLIClassifier& model, const InferenceInput& input,
                                InferenceMode mode) {
  return model.classify(build_inference_sequence(input, mode, model.encoder()));
}

}  // namespace lirex
