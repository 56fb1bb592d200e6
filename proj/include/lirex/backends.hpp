#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lirex/nn/tensor.hpp"
#include "lirex/nn/transformer.hpp"
#include "lirex/text.hpp"
#include "lirex/types.hpp"

namespace lirex {

// ------------------------------ vocabulary ------------------------------

// Token inventory shared by every model in a run. Ids 0..3 are reserved for
// the separator, unknown, end-of-text, and newline tokens; corpus tokens
// follow in first-appearance order. The content hash guards checkpoints
// against being loaded with a different vocabulary.
class Vocabulary {
 public:
  static constexpr int kSep = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEot = 2;
  static constexpr int kNewline = 3;

  Vocabulary();

  static Vocabulary build_from_texts(const std::vector<std::string>& texts,
                                     const std::vector<std::string>& extra_tokens = {});

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  std::uint64_t content_hash() const;

  std::vector<int> ids_for(const TokenSeq& tokens) const;

  void save(const std::filesystem::path& file) const;
  static Vocabulary load(const std::filesystem::path& file);

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ------------------------------ training config ------------------------------

struct TrainingConfig {
  int batch_size = 8;
  double learning_rate = 1e-3;
  int epochs = 10;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError on non-positive values
};

// ------------------------------ encoder contract ------------------------------

// Produces one hidden vector per input token. Evaluation calls are
// deterministic and safe to share across threads; training-time graph
// construction mutates optimizer state and is single-threaded.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual std::string kind() const = 0;
  virtual int hidden_dim() const = 0;
  virtual int max_len() const = 0;
  virtual const Vocabulary& vocab() const = 0;

  virtual TokenSeq tokenize(const std::string& text) const = 0;
  std::vector<int> token_ids(const TokenSeq& tokens) const { return vocab().ids_for(tokens); }

  // Builds the encoder forward pass on the caller's tape. Sequences longer
  // than max_len() are truncated with a warning (never silently).
  virtual nn::Var encode_on_tape(nn::Tape& tape, std::vector<int> ids) = 0;

  // Evaluation-mode convenience: encodes and returns the hidden matrix.
  nn::Matrix encode(const TokenSeq& tokens);

  virtual std::vector<nn::Parameter*> parameters() = 0;
};

// ------------------------------ generator contract ------------------------------

// Autoregressive language model over the shared vocabulary.
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  virtual std::string kind() const = 0;
  virtual int max_len() const = 0;
  virtual int max_new_tokens() const = 0;
  virtual const Vocabulary& vocab() const = 0;

  virtual TokenSeq tokenize(const std::string& text) const = 0;
  virtual nn::Var lm_logits_on_tape(nn::Tape& tape, const std::vector<int>& ids) = 0;

  virtual std::vector<nn::Parameter*> parameters() = 0;
};

// ------------------------------ tiny backends ------------------------------

struct TinyBackendConfig {
  int hidden_dim = 32;
  int heads = 2;
  int layers = 2;
  int ffn_dim = 128;
  int max_len = 128;
  int max_new_tokens = 64;
};

class TinyEncoder final : public EncoderBackend {
 public:
  TinyEncoder(Vocabulary vocab, const TinyBackendConfig& cfg, std::uint64_t seed);

  std::string kind() const override { return "tiny-encoder"; }
  int hidden_dim() const override { return cfg_.hidden_dim; }
  int max_len() const override { return cfg_.max_len; }
  const Vocabulary& vocab() const override { return vocab_; }
  TokenSeq tokenize(const std::string& text) const override { return tokenize_words(text); }
  nn::Var encode_on_tape(nn::Tape& tape, std::vector<int> ids) override;
  std::vector<nn::Parameter*> parameters() override { return net_->parameters(); }

  long truncation_count() const { return truncations_.load(); }

 private:
  Vocabulary vocab_;
  TinyBackendConfig cfg_;
  std::unique_ptr<nn::Transformer> net_;
  std::atomic<long> truncations_{0};
};

class TinyGenerator final : public GeneratorBackend {
 public:
  TinyGenerator(Vocabulary vocab, const TinyBackendConfig& cfg, std::uint64_t seed);

  std::string kind() const override { return "tiny-generator"; }
  int max_len() const override { return cfg_.max_len; }
  int max_new_tokens() const override { return cfg_.max_new_tokens; }
  const Vocabulary& vocab() const override { return vocab_; }
  TokenSeq tokenize(const std::string& text) const override { return tokenize_words(text); }
  nn::Var lm_logits_on_tape(nn::Tape& tape, const std::vector<int>& ids) override;
  std::vector<nn::Parameter*> parameters() override { return net_->parameters(); }

 private:
  Vocabulary vocab_;
  TinyBackendConfig cfg_;
  std::unique_ptr<nn::Transformer> net_;
};

// ------------------------------ pretrained stubs ------------------------------

// Placeholders for externally hosted pretrained weights. They expose the
// full-scale geometry (hidden_dim=768 unless overridden) so configurations
// can be constructed and validated, but any forward pass throws ConfigError:
// this build only executes the tiny backends.
class PretrainedEncoderStub final : public EncoderBackend {
 public:
  PretrainedEncoderStub(std::string identifier, Vocabulary vocab, int hidden_dim = 768,
                        int max_len = 512);

  std::string kind() const override { return "pretrained:" + identifier_; }
  int hidden_dim() const override { return hidden_dim_; }
  int max_len() const override { return max_len_; }
  const Vocabulary& vocab() const override { return vocab_; }
  TokenSeq tokenize(const std::string& text) const override { return tokenize_words(text); }
  nn::Var encode_on_tape(nn::Tape& tape, std::vector<int> ids) override;
  std::vector<nn::Parameter*> parameters() override { return {}; }

 private:
  std::string identifier_;
  Vocabulary vocab_;
  int hidden_dim_, max_len_;
};

class PretrainedGeneratorStub final : public GeneratorBackend {
 public:
  PretrainedGeneratorStub(std::string identifier, Vocabulary vocab, int max_len = 1024,
                          int max_new_tokens = 64);

  std::string kind() const override { return "pretrained:" + identifier_; }
  int max_len() const override { return max_len_; }
  int max_new_tokens() const override { return max_new_tokens_; }
  const Vocabulary& vocab() const override { return vocab_; }
  TokenSeq tokenize(const std::string& text) const override { return tokenize_words(text); }
  nn::Var lm_logits_on_tape(nn::Tape& tape, const std::vector<int>& ids) override;
  std::vector<nn::Parameter*> parameters() override { return {}; }

 private:
  std::string identifier_;
  Vocabulary vocab_;
  int max_len_, max_new_tokens_;
};

// ------------------------------ language-model training ------------------------------

struct FineTuneReport {
  double nll_before = 0.0;
  double nll_after = 0.0;
  std::vector<double> epoch_nll;  // evaluated after each epoch
};

// Pooled per-token negative log-likelihood of the texts under the model.
double average_nll(GeneratorBackend& gen, const std::vector<std::string>& texts);

// Next-token training over the given texts (each wrapped in separator /
// end-of-text markers). Throws ConfigError on an empty corpus before
// touching any parameter.
FineTuneReport fine_tune_lm(GeneratorBackend& gen, const std::vector<std::string>& texts,
                            const TrainingConfig& config);

// Greedy continuation of the prompt. Stops at the first end-of-text token,
// the first newline, or max_new_tokens; returns the detokenized
// continuation (empty if the prompt already ends with end-of-text).
// Throws FormatError when the prompt exceeds the model's budget.
std::string greedy_decode(GeneratorBackend& gen, const std::string& prompt);

// ------------------------------ checkpoints ------------------------------

// Checkpoints are directories holding metadata.json (model kind, vocabulary
// hash, seed, free-form config) plus params.bin with raw little-endian
// doubles in parameter registration order. Loading verifies the kind, the
// vocabulary hash, and every tensor shape.
void save_checkpoint(const std::filesystem::path& dir, const std::string& kind,
                     const Vocabulary& vocab, std::uint64_t seed, const nlohmann::json& config,
                     const std::vector<nn::Parameter*>& params);

void load_checkpoint(const std::filesystem::path& dir, const std::string& expected_kind,
                     const Vocabulary& vocab, const std::vector<nn::Parameter*>& params);

nlohmann::json checkpoint_metadata(const std::filesystem::path& dir);

}  // namespace lirex
