#include "lirex/nn/transformer.hpp"

#include <cmath>
#include <string>

#include "lirex/errors.hpp"

namespace lirex::nn {

void TransformerConfig::validate() const {
  if (vocab_size <= 0) throw ConfigError("transformer: vocab_size must be positive");
  if (hidden_dim <= 0 || heads <= 0 || layers <= 0 || ffn_dim <= 0 || max_len <= 0)
    throw ConfigError("transformer: dimensions must be positive");
  if (hidden_dim % heads != 0)
    throw ConfigError("transformer: hidden_dim must be divisible by heads");
}

Matrix glorot_init(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  return m;
}

namespace {
Matrix gaussian_init(int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian(0.0, stddev);
  return m;
}

std::string pname(int index, const char* part) {
  return "block" + std::to_string(index) + "." + part;
}
}  // namespace

Transformer::Block::Block(int d, int ffn, int index, Rng& rng)
    : wq(pname(index, "wq"), d, d),
      bq(pname(index, "bq"), 1, d),
      wk(pname(index, "wk"), d, d),
      bk(pname(index, "bk"), 1, d),
      wv(pname(index, "wv"), d, d),
      bv(pname(index, "bv"), 1, d),
      wo(pname(index, "wo"), d, d),
      bo(pname(index, "bo"), 1, d),
      ln1_g(pname(index, "ln1_g"), 1, d),
      ln1_b(pname(index, "ln1_b"), 1, d),
      wf1(pname(index, "wf1"), d, ffn),
      bf1(pname(index, "bf1"), 1, ffn),
      wf2(pname(index, "wf2"), ffn, d),
      bf2(pname(index, "bf2"), 1, d),
      ln2_g(pname(index, "ln2_g"), 1, d),
      ln2_b(pname(index, "ln2_b"), 1, d) {
  wq.value = glorot_init(d, d, rng);
  wk.value = glorot_init(d, d, rng);
  wv.value = glorot_init(d, d, rng);
  wo.value = glorot_init(d, d, rng);
  wf1.value = glorot_init(d, ffn, rng);
  wf2.value = glorot_init(ffn, d, rng);
  ln1_g.value.setOnes();
  ln2_g.value.setOnes();
}

Transformer::Transformer(const TransformerConfig& cfg, Rng& rng)
    : cfg_(cfg),
      tok_emb_("tok_emb", cfg.vocab_size, cfg.hidden_dim),
      pos_emb_("pos_emb", cfg.max_len, cfg.hidden_dim) {
  cfg_.validate();
  tok_emb_.value = gaussian_init(cfg.vocab_size, cfg.hidden_dim, 0.1, rng);
  pos_emb_.value = gaussian_init(cfg.max_len, cfg.hidden_dim, 0.1, rng);
  blocks_.reserve(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) blocks_.emplace_back(cfg.hidden_dim, cfg.ffn_dim, l, rng);
  if (cfg.lm_head) {
    lm_w_.emplace("lm_w", cfg.hidden_dim, cfg.vocab_size);
    lm_b_.emplace("lm_b", 1, cfg.vocab_size);
    lm_w_->value = glorot_init(cfg.hidden_dim, cfg.vocab_size, rng);
  }
}

Var Transformer::hidden_states(Tape& tape, const std::vector<int>& ids) {
  if (ids.empty()) throw ConsistencyError("transformer: empty input sequence");
  if (static_cast<int>(ids.size()) > cfg_.max_len)
    throw ConsistencyError("transformer: sequence longer than max_len");
  const int L = static_cast<int>(ids.size());
  const int d = cfg_.hidden_dim;
  const int dk = d / cfg_.heads;
  std::vector<int> positions(ids.size());
  for (int i = 0; i < L; ++i) positions[i] = i;

  Var x = tape.add(tape.gather_rows(tape.leaf(tok_emb_), ids),
                   tape.gather_rows(tape.leaf(pos_emb_), positions));

  Matrix causal_mask;
  if (cfg_.causal) {
    causal_mask = Matrix::Zero(L, L);
    for (int r = 0; r < L; ++r)
      for (int c = r + 1; c < L; ++c) causal_mask(r, c) = -1e30;
  }

  for (Block& b : blocks_) {
    Var q = tape.add_rowvec(tape.matmul(x, tape.leaf(b.wq)), tape.leaf(b.bq));
    Var k = tape.add_rowvec(tape.matmul(x, tape.leaf(b.wk)), tape.leaf(b.bk));
    Var v = tape.add_rowvec(tape.matmul(x, tape.leaf(b.wv)), tape.leaf(b.bv));
    std::vector<Var> heads;
    heads.reserve(cfg_.heads);
    for (int h = 0; h < cfg_.heads; ++h) {
      Var qh = tape.slice_cols(q, h * dk, dk);
      Var kh = tape.slice_cols(k, h * dk, dk);
      Var vh = tape.slice_cols(v, h * dk, dk);
      Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(dk));
      if (cfg_.causal) scores = tape.add_const(scores, causal_mask);
      heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    Var attn = tape.add_rowvec(tape.matmul(tape.concat_cols(heads), tape.leaf(b.wo)),
                               tape.leaf(b.bo));
    x = tape.layer_norm_rows(tape.add(x, attn), tape.leaf(b.ln1_g), tape.leaf(b.ln1_b));
    Var f = tape.relu(tape.add_rowvec(tape.matmul(x, tape.leaf(b.wf1)), tape.leaf(b.bf1)));
    Var ffn = tape.add_rowvec(tape.matmul(f, tape.leaf(b.wf2)), tape.leaf(b.bf2));
    x = tape.layer_norm_rows(tape.add(x, ffn), tape.leaf(b.ln2_g), tape.leaf(b.ln2_b));
  }
  return x;
}

Var Transformer::lm_logits(Tape& tape, const std::vector<int>& ids) {
  if (!cfg_.lm_head) throw ConsistencyError("transformer: lm_logits without an lm head");
  Var h = hidden_states(tape, ids);
  return tape.add_rowvec(tape.matmul(h, tape.leaf(*lm_w_)), tape.leaf(*lm_b_));
}

std::vector<Parameter*> Transformer::parameters() {
  std::vector<Parameter*> out = {&tok_emb_, &pos_emb_};
  for (Block& b : blocks_) {
    for (Parameter* p : {&b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo, &b.ln1_g,
                         &b.ln1_b, &b.wf1, &b.bf1, &b.wf2, &b.bf2, &b.ln2_g, &b.ln2_b})
      out.push_back(p);
  }
  if (lm_w_) {
    out.push_back(&*lm_w_);
    out.push_back(&*lm_b_);
  }
  return out;
}

}  // namespace lirex::nn
