#include "lirex/selector.hpp"

#include <algorithm>
#include <cmath>

#include "lirex/nn/optimizer.hpp"
#include "lirex/nn/transformer.hpp"

namespace lirex {

namespace {

Token separator_token() {
  Token t;
  t.text = kSepText;
  t.separator = true;
  return t;
}

}  // namespace

TokenSeq build_classifier_sequence(const SequenceParts& parts, const EncoderBackend& encoder) {
  struct Segment {
    TokenSeq tokens;
    bool trimmable;
  };
  std::vector<Segment> segments;
  if (!parts.premise.empty()) segments.push_back({encoder.tokenize(parts.premise), true});
  if (!parts.hypothesis.empty()) segments.push_back({encoder.tokenize(parts.hypothesis), false});
  if (!parts.explanation.empty()) segments.push_back({encoder.tokenize(parts.explanation), true});
  if (segments.empty()) throw FormatError("classifier input has no text segments");

  std::size_t budget = static_cast<std::size_t>(encoder.max_len());
  auto total_len = [&]() {
    std::size_t len = 1;  // leading separator
    for (const Segment& s : segments) len += s.tokens.size() + 1;
    return len;
  };
  while (total_len() > budget) {
    // Later trimmable segments lose tail tokens first.
    Segment* victim = nullptr;
    for (Segment& s : segments)
      if (s.trimmable && !s.tokens.empty()) victim = &s;
    if (victim == nullptr)
      throw FormatError("hypothesis alone exceeds the encoder budget of " +
                        std::to_string(budget) + " tokens");
    victim->tokens.pop_back();
    if (victim->tokens.empty())
      segments.erase(segments.begin() + (victim - segments.data()));
  }

  TokenSeq seq;
  seq.push_back(separator_token());
  for (const Segment& s : segments) {
    for (const Token& t : s.tokens) seq.push_back(t);
    seq.push_back(separator_token());
  }
  return seq;
}

NLIClassifier::NLIClassifier(EncoderBackend& encoder, std::string name, std::uint64_t seed)
    : encoder_(encoder),
      name_(std::move(name)),
      u1_(name_ + ".u1", encoder.hidden_dim(), encoder.hidden_dim()),
      u2_(name_ + ".u2", encoder.hidden_dim(), kNumLabels) {
  Rng rng(Rng::splitmix(seed ^ 0x636c617373ULL));
  u1_.value = nn::glorot_init(encoder.hidden_dim(), encoder.hidden_dim(), rng);
  u2_.value = nn::glorot_init(encoder.hidden_dim(), kNumLabels, rng);
}

nn::Var NLIClassifier::logits_on_tape(nn::Tape& tape, const TokenSeq& seq) {
  nn::Var hidden = encoder_.encode_on_tape(tape, encoder_.token_ids(seq));
  nn::Var h0 = tape.slice_rows(hidden, 0, 1);
  return tape.matmul(tape.tanh_of(tape.matmul(h0, tape.transpose(tape.leaf(u1_)))),
                     tape.leaf(u2_));
}

LabelDistribution NLIClassifier::classify(const TokenSeq& seq) {
  nn::Tape tape(false);
  const nn::Matrix& logits = tape.value(logits_on_tape(tape, seq));
  double m = logits.maxCoeff();
  LabelDistribution dist;
  double z = 0.0;
  for (int l = 0; l < kNumLabels; ++l) z += std::exp(logits(0, l) - m);
  for (int l = 0; l < kNumLabels; ++l) dist.probs[l] = std::exp(logits(0, l) - m) / z;
  dist.validate();
  return dist;
}

std::vector<nn::Parameter*> NLIClassifier::all_parameters() {
  std::vector<nn::Parameter*> params = encoder_.parameters();
  params.push_back(&u1_);
  params.push_back(&u2_);
  return params;
}

SelectorReport train_selector(NLIClassifier& selector, const CorpusSplit& split,
                              const TrainingConfig& config) {
  config.validate();
  if (split.instances.empty()) throw ConfigError("train_selector: empty training split");

  struct Example {
    TokenSeq seq;
    int target;
  };
  std::vector<Example> examples;
  examples.reserve(split.instances.size());
  for (const AnnotatedInstance& inst : split.instances) {
    if (inst.gold_explanation.empty())
      throw ConsistencyError("train_selector: instance '" + inst.base.instance_id +
                             "' has no gold explanation");
    examples.push_back(
        {build_classifier_sequence(
             {inst.base.premise, inst.base.hypothesis, inst.gold_explanation},
             selector.encoder()),
         static_cast<int>(inst.base.gold_label)});
  }

  auto mean_loss = [&]() {
    double total = 0.0;
    for (const Example& ex : examples) {
      nn::Tape tape(false);
      total += tape.value(
          tape.mean_softmax_xent(selector.logits_on_tape(tape, ex.seq), {ex.target}, {1}))(0, 0);
    }
    return total / static_cast<double>(examples.size());
  };

  SelectorReport report;
  report.loss_before = mean_loss();

  std::vector<nn::Parameter*> params = selector.all_parameters();
  nn::Adam opt(params, config.learning_rate);
  Rng rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t batch_end = std::min(order.size(), i + config.batch_size);
      int in_batch = 0;
      opt.zero_grad();
      for (; i < batch_end; ++i) {
        const Example& ex = examples[order[i]];
        nn::Tape tape;
        tape.backward(
            tape.mean_softmax_xent(selector.logits_on_tape(tape, ex.seq), {ex.target}, {1}));
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
  for (const Example& ex : examples) {
    nn::Tape tape(false);
    const nn::Matrix& logits = tape.value(selector.logits_on_tape(tape, ex.seq));
    int best = 0;
    for (int l = 1; l < kNumLabels; ++l)
      if (logits(0, l) > logits(0, best)) best = l;
    correct += best == ex.target ? 1 : 0;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());

  selector.mark_trained();
  return report;
}

LabelDistribution selection_scores(NLIClassifier& selector, const NLIInstance& instance,
                                   const ExplanationTriple& triple) {
  LabelDistribution scores;
  double sum = 0.0;
  for (Label label : kAllLabels) {
    int li = static_cast<int>(label);
    LabelDistribution dist = selector.classify(build_classifier_sequence(
        {instance.premise, instance.hypothesis, triple.explanation[li]}, selector.encoder()));
    scores.probs[li] = dist.probs[li];
    sum += scores.probs[li];
  }
  if (sum <= 0.0) {
    for (int l = 0; l < kNumLabels; ++l) scores.probs[l] = 1.0 / kNumLabels;
  } else {
    for (int l = 0; l < kNumLabels; ++l) scores.probs[l] /= sum;
  }
  scores.validate();
  return scores;
}

Label select_max(const LabelDistribution& scores) { return scores.argmax(); }

Label select_sample(const LabelDistribution& scores, Rng& rng) {
  double u = rng.unit();
  double cumulative = 0.0;
  for (Label label : kAllLabels) {
    cumulative += scores[label];
    if (u < cumulative) return label;
  }
  return kAllLabels.back();  // guards against floating-point undershoot
}

}  // namespace lirex
