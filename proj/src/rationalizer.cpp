#include "lirex/rationalizer.hpp"

#include <algorithm>
#include <cmath>

#include "lirex/nn/optimizer.hpp"
#include "lirex/nn/transformer.hpp"
#include "lirex/rng.hpp"

namespace lirex {

namespace {

Token separator_token() {
  Token t;
  t.text = kSepText;
  t.separator = true;
  return t;
}

Token plain_token(const std::string& text) {
  Token t;
  t.text = text;
  return t;
}

}  // namespace

TokenSeq build_premise_sequence(Label label, const std::string& premise,
                                const EncoderBackend& encoder) {
  TokenSeq seq;
  seq.push_back(separator_token());
  seq.push_back(plain_token(to_string(label)));
  seq.push_back(separator_token());
  for (const Token& t : encoder.tokenize(premise)) seq.push_back(t);
  seq.push_back(separator_token());
  return seq;
}

TokenSeq build_hypothesis_sequence(const std::string& hypothesis,
                                   const EncoderBackend& encoder) {
  TokenSeq seq;
  seq.push_back(separator_token());
  for (const Token& t : encoder.tokenize(hypothesis)) seq.push_back(t);
  seq.push_back(separator_token());
  return seq;
}

nn::Matrix cross_attention(const nn::Matrix& Hh, const nn::Matrix& Hp, const nn::Matrix& W1) {
  nn::Matrix scores = Hh * (Hp * W1).array().tanh().matrix().transpose();
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double m = scores.row(i).maxCoeff();
    Eigen::Array<double, 1, Eigen::Dynamic> e = (scores.row(i).array() - m).exp();
    scores.row(i) = (e / e.sum()).matrix();
  }
  return scores;
}

nn::Matrix fuse(const nn::Matrix& Hh, const nn::Matrix& Hp, const nn::Matrix& A) {
  Eigen::Index n = Hh.rows(), d = Hh.cols();
  nn::Matrix out(n, 3 * d);
  out.leftCols(d) = Hh;
  out.middleCols(d, d) = Hp.colwise().maxCoeff().replicate(n, 1);
  out.rightCols(d) = A * Hp;
  return out;
}

RationalizerModel::RationalizerModel(EncoderBackend& encoder, std::uint64_t seed)
    : encoder_(encoder),
      w1_("rationalizer.w1", encoder.hidden_dim(), encoder.hidden_dim()),
      w2_("rationalizer.w2", 2, 3 * encoder.hidden_dim()) {
  Rng rng(Rng::splitmix(seed ^ 0x7261746974ULL));
  w1_.value = nn::glorot_init(encoder.hidden_dim(), encoder.hidden_dim(), rng);
  w2_.value = nn::glorot_init(2, 3 * encoder.hidden_dim(), rng);
}

nn::Var RationalizerModel::token_logits(nn::Tape& tape, const TokenSeq& premise_seq,
                                        const TokenSeq& hypothesis_seq) {
  nn::Var hp = encoder_.encode_on_tape(tape, encoder_.token_ids(premise_seq));
  nn::Var hh = encoder_.encode_on_tape(tape, encoder_.token_ids(hypothesis_seq));
  nn::Var keys = tape.tanh_of(tape.matmul(hp, tape.leaf(w1_)));
  nn::Var attn = tape.softmax_rows(tape.matmul(hh, tape.transpose(keys)));
  int n = static_cast<int>(tape.value(hh).rows());
  nn::Var fused = tape.concat_cols(
      {hh, tape.repeat_row(tape.max_over_rows(hp), n), tape.matmul(attn, hp)});
  return tape.matmul(fused, tape.transpose(tape.leaf(w2_)));
}

RationaleMask RationalizerModel::predict(const NLIInstance& instance, Label conditioning_label) {
  TokenSeq premise_seq = build_premise_sequence(conditioning_label, instance.premise, encoder_);
  TokenSeq hypothesis_seq = build_hypothesis_sequence(instance.hypothesis, encoder_);

  nn::Tape tape(false);
  const nn::Matrix& logits = tape.value(token_logits(tape, premise_seq, hypothesis_seq));

  RationaleMask mask;
  mask.token_probs.assign(hypothesis_seq.size(), 0.0);
  mask.token_labels.assign(hypothesis_seq.size(), 0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    std::size_t i = static_cast<std::size_t>(r);
    if (i >= hypothesis_seq.size()) break;
    if (hypothesis_seq[i].separator) continue;
    double z0 = logits(r, 0), z1 = logits(r, 1);
    double m = std::max(z0, z1);
    double p1 = std::exp(z1 - m) / (std::exp(z0 - m) + std::exp(z1 - m));
    mask.token_probs[i] = p1;
    mask.token_labels[i] = p1 > 0.5 ? 1 : 0;
  }
  mask.validate();
  return mask;
}

std::vector<nn::Parameter*> RationalizerModel::all_parameters() {
  std::vector<nn::Parameter*> params = encoder_.parameters();
  params.push_back(&w1_);
  params.push_back(&w2_);
  return params;
}

RationalizerReport train_rationalizer(RationalizerModel& model, const CorpusSplit& split,
                                      const TrainingConfig& config) {
  config.validate();
  if (split.instances.empty())
    throw ConfigError("train_rationalizer: empty training split");

  EncoderBackend& enc = model.encoder();

  // Pre-align every instance before touching any parameter.
  struct Example {
    TokenSeq premise_seq;
    TokenSeq hypothesis_seq;
    std::vector<int> targets;
    std::vector<unsigned char> active;
  };
  std::vector<Example> examples;
  examples.reserve(split.instances.size());
  for (const AnnotatedInstance& inst : split.instances) {
    if (inst.highlight_spans.empty())
      throw ConsistencyError("train_rationalizer: instance '" + inst.base.instance_id +
                             "' has no highlight spans");
    Example ex;
    ex.premise_seq = build_premise_sequence(inst.base.gold_label, inst.base.premise, enc);
    ex.hypothesis_seq = build_hypothesis_sequence(inst.base.hypothesis, enc);
    RationaleMask gold = mask_from_highlights(inst, ex.hypothesis_seq);
    ex.targets = gold.token_labels;
    ex.active.resize(ex.hypothesis_seq.size());
    bool any_active = false;
    for (std::size_t i = 0; i < ex.hypothesis_seq.size(); ++i) {
      ex.active[i] = ex.hypothesis_seq[i].separator ? 0 : 1;
      any_active = any_active || ex.active[i];
    }
    if (!any_active)
      throw ConsistencyError("train_rationalizer: instance '" + inst.base.instance_id +
                             "' has no scorable hypothesis tokens");
    // Stay within the encoder budget so targets align with logits rows.
    std::size_t limit = static_cast<std::size_t>(enc.max_len());
    if (ex.hypothesis_seq.size() > limit) {
      ex.hypothesis_seq.resize(limit);
      ex.targets.resize(limit);
      ex.active.resize(limit);
    }
    examples.push_back(std::move(ex));
  }

  auto mean_loss = [&]() {
    double total = 0.0;
    for (const Example& ex : examples) {
      nn::Tape tape(false);
      nn::Var loss = tape.mean_softmax_xent(model.token_logits(tape, ex.premise_seq, ex.hypothesis_seq),
                                            ex.targets, ex.active);
      total += tape.value(loss)(0, 0);
    }
    return total / static_cast<double>(examples.size());
  };

  RationalizerReport report;
  report.loss_before = mean_loss();

  std::vector<nn::Parameter*> params = model.all_parameters();
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
        nn::Var loss = tape.mean_softmax_xent(
            model.token_logits(tape, ex.premise_seq, ex.hypothesis_seq), ex.targets, ex.active);
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

  // Token accuracy over non-separator positions with the trained weights.
  std::size_t correct = 0, counted = 0;
  for (const Example& ex : examples) {
    nn::Tape tape(false);
    const nn::Matrix& logits =
        tape.value(model.token_logits(tape, ex.premise_seq, ex.hypothesis_seq));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      if (!ex.active[static_cast<std::size_t>(r)]) continue;
      int pred = logits(r, 1) > logits(r, 0) ? 1 : 0;
      correct += pred == ex.targets[static_cast<std::size_t>(r)] ? 1 : 0;
      ++counted;
    }
  }
  report.token_accuracy = counted ? static_cast<double>(correct) / counted : 0.0;

  model.mark_trained();
  return report;
}

}  // namespace lirex
