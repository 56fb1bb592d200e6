#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lirex/backends.hpp"
#include "lirex/corpus.hpp"
#include "lirex/nn/tensor.hpp"
#include "lirex/types.hpp"

namespace lirex {

// Premise-side input: a separator, the conditioning label word, a separator,
// the premise tokens, and a closing separator. The label primes the encoder
// toward label-relevant evidence.
TokenSeq build_premise_sequence(Label label, const std::string& premise,
                                const EncoderBackend& encoder);

// Hypothesis-side input: the hypothesis tokens wrapped in separators.
TokenSeq build_hypothesis_sequence(const std::string& hypothesis,
                                   const EncoderBackend& encoder);

// Attention of each hypothesis vector over all premise vectors through a
// learned square map: A = row_softmax(Hh * tanh(Hp * W1)^T). Every row of
// the result sums to one. Plain-matrix reference used by the model forward
// pass and directly testable against scalar loops.
nn::Matrix cross_attention(const nn::Matrix& Hh, const nn::Matrix& Hp, const nn::Matrix& W1);

// Per-token fused features: the token's own vector, a premise-wide pooled
// vector (column-wise max over all premise rows, identical in every row),
// and the attention-weighted premise sum A*Hp. Output width is exactly
// three times the hidden size.
nn::Matrix fuse(const nn::Matrix& Hh, const nn::Matrix& Hp, const nn::Matrix& A);

// Token-level rationale tagger. Scores every hypothesis token with the
// probability that it belongs to the rationale (head class index 1), using
// hypothesis-over-premise attention conditioned on a label.
class RationalizerModel {
 public:
  RationalizerModel(EncoderBackend& encoder, std::uint64_t seed);

  EncoderBackend& encoder() { return encoder_; }
  const EncoderBackend& encoder() const { return encoder_; }

  // Builds token logits (rows = hypothesis tokens after any encoder
  // truncation, two columns) on the caller's tape.
  nn::Var token_logits(nn::Tape& tape, const TokenSeq& premise_seq, const TokenSeq& hypothesis_seq);

  // Scores the instance's hypothesis under the given conditioning label.
  // The mask covers the full separator-wrapped hypothesis sequence;
  // separator positions always get probability 0 / label 0, and positions
  // beyond the encoder budget (if the sequence was truncated) get 0 as
  // well. A token is labeled 1 iff its probability exceeds 0.5.
  RationaleMask predict(const NLIInstance& instance, Label conditioning_label);

  std::vector<nn::Parameter*> parameters() { return {&w1_, &w2_}; }
  std::vector<nn::Parameter*> all_parameters();  // encoder + head, checkpoint order

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  nn::Parameter& w1() { return w1_; }
  nn::Parameter& w2() { return w2_; }

 private:
  EncoderBackend& encoder_;
  nn::Parameter w1_;  // hidden x hidden attention map
  nn::Parameter w2_;  // 2 x (3*hidden) token head
  bool trained_ = false;
};

struct RationalizerReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::vector<double> epoch_loss;
  double token_accuracy = 0.0;  // non-separator tokens, training split, after training
};

// Supervised training against human highlight spans. Every instance is
// scored with its gold label as the conditioning label. Instances whose
// spans cannot be aligned to the hypothesis tokenization make the call
// throw ConsistencyError before any parameter is touched; instances
// without spans are rejected the same way (train on the annotated split).
RationalizerReport train_rationalizer(RationalizerModel& model, const CorpusSplit& split,
                                      const TrainingConfig& config);

}  // namespace lirex
