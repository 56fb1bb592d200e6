#pragma once

#include <optional>
#include <vector>

#include "lirex/nn/tensor.hpp"
#include "lirex/rng.hpp"

namespace lirex::nn {

struct TransformerConfig {
  int vocab_size = 0;
  int hidden_dim = 32;
  int heads = 2;
  int layers = 2;
  int ffn_dim = 128;
  int max_len = 128;
  bool causal = false;   // restrict attention to the prefix (decoder)
  bool lm_head = false;  // project hidden states to vocabulary logits

  void validate() const;
};

// Minimal trainable transformer: learned token + position embeddings and
// post-norm blocks (multi-head self-attention, then a two-layer ReLU MLP).
// Noncopyable so that Parameter addresses stay stable.
class Transformer {
 public:
  Transformer(const TransformerConfig& cfg, Rng& rng);
  Transformer(const Transformer&) = delete;
  Transformer& operator=(const Transformer&) = delete;

  // Contextual states, one row per input token (ids.size() x hidden_dim).
  Var hidden_states(Tape& tape, const std::vector<int>& ids);
  // Next-token logits per position (ids.size() x vocab_size); lm_head only.
  Var lm_logits(Tape& tape, const std::vector<int>& ids);

  std::vector<Parameter*> parameters();
  const TransformerConfig& config() const { return cfg_; }

 private:
  struct Block {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln1_g, ln1_b;
    Parameter wf1, bf1, wf2, bf2;
    Parameter ln2_g, ln2_b;
    Block(int d, int ffn, int index, Rng& rng);
  };

  TransformerConfig cfg_;
  Parameter tok_emb_, pos_emb_;
  std::vector<Block> blocks_;
  std::optional<Parameter> lm_w_, lm_b_;
};

// Glorot-uniform initialization helper shared with the task heads.
Matrix glorot_init(int rows, int cols, Rng& rng);

}  // namespace lirex::nn
