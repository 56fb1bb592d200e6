#include "lirex/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "lirex/io_util.hpp"
#include "lirex/nn/optimizer.hpp"
#include "lirex/rng.hpp"

namespace lirex {

namespace fs = std::filesystem;
using nn::Matrix;
using nn::Tape;
using nn::Var;

// ------------------------------ vocabulary ------------------------------

Vocabulary::Vocabulary() {
  add(kSepText);
  add(kUnkText);
  add(kEotText);
  add(kNewlineText);
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build_from_texts(const std::vector<std::string>& texts,
                                        const std::vector<std::string>& extra_tokens) {
  Vocabulary v;
  for (const auto& t : extra_tokens) v.add(t);
  for (const auto& text : texts) {
    for (const Token& tok : tokenize_words(text)) v.add(tok.text);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(token) > 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw ConsistencyError("vocabulary: token id out of range");
  return tokens_[id];
}

std::uint64_t Vocabulary::content_hash() const {
  std::string joined;
  for (const auto& t : tokens_) {
    joined += t;
    joined += '\x1f';
  }
  return fnv1a(joined);
}

std::vector<int> Vocabulary::ids_for(const TokenSeq& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const Token& t : tokens) ids.push_back(t.separator ? kSep : id(t.text));
  return ids;
}

void Vocabulary::save(const fs::path& file) const {
  std::string body;
  for (const auto& t : tokens_) {
    body += (t == "\n") ? std::string("\\n") : t;
    body += '\n';
  }
  atomic_write(file, body);
}

Vocabulary Vocabulary::load(const fs::path& file) {
  std::vector<std::string> lines = read_lines(file);
  Vocabulary v;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string tok = lines[i] == "\\n" ? std::string("\n") : lines[i];
    if (i < static_cast<std::size_t>(v.size())) {
      if (v.token(static_cast<int>(i)) != tok)
        throw FormatError("vocabulary file: reserved token mismatch at line " +
                          std::to_string(i + 1));
      continue;
    }
    v.add(tok);
  }
  if (v.size() < 4) throw FormatError("vocabulary file: missing reserved tokens");
  return v;
}

// ------------------------------ training config ------------------------------

void TrainingConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("training config: batch_size must be positive");
  if (learning_rate <= 0.0) throw ConfigError("training config: learning_rate must be positive");
  if (epochs <= 0) throw ConfigError("training config: epochs must be positive");
}

// ------------------------------ encoder backends ------------------------------

Matrix EncoderBackend::encode(const TokenSeq& tokens) {
  Tape tape(false);
  Var h = encode_on_tape(tape, token_ids(tokens));
  return tape.value(h);
}

namespace {
nn::TransformerConfig encoder_net_config(const TinyBackendConfig& cfg, int vocab_size) {
  nn::TransformerConfig t;
  t.vocab_size = vocab_size;
  t.hidden_dim = cfg.hidden_dim;
  t.heads = cfg.heads;
  t.layers = cfg.layers;
  t.ffn_dim = cfg.ffn_dim;
  t.max_len = cfg.max_len;
  t.causal = false;
  t.lm_head = false;
  return t;
}

nn::TransformerConfig generator_net_config(const TinyBackendConfig& cfg, int vocab_size) {
  nn::TransformerConfig t = encoder_net_config(cfg, vocab_size);
  t.causal = true;
  t.lm_head = true;
  return t;
}

std::unique_ptr<nn::Transformer> make_net(const nn::TransformerConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return std::make_unique<nn::Transformer>(cfg, rng);
}
}  // namespace

TinyEncoder::TinyEncoder(Vocabulary vocab, const TinyBackendConfig& cfg, std::uint64_t seed)
    : vocab_(std::move(vocab)),
      cfg_(cfg),
      net_(make_net(encoder_net_config(cfg, vocab_.size()), seed)) {}

nn::Var TinyEncoder::encode_on_tape(Tape& tape, std::vector<int> ids) {
  if (static_cast<int>(ids.size()) > cfg_.max_len) {
    truncations_.fetch_add(1);
    std::cerr << "[tiny-encoder] warning: truncating sequence of " << ids.size()
              << " tokens to max_len=" << cfg_.max_len << "\n";
    ids.resize(cfg_.max_len);
  }
  return net_->hidden_states(tape, ids);
}

TinyGenerator::TinyGenerator(Vocabulary vocab, const TinyBackendConfig& cfg, std::uint64_t seed)
    : vocab_(std::move(vocab)),
      cfg_(cfg),
      net_(make_net(generator_net_config(cfg, vocab_.size()), seed)) {}

nn::Var TinyGenerator::lm_logits_on_tape(Tape& tape, const std::vector<int>& ids) {
  return net_->lm_logits(tape, ids);
}

// ------------------------------ pretrained stubs ------------------------------

PretrainedEncoderStub::PretrainedEncoderStub(std::string identifier, Vocabulary vocab,
                                             int hidden_dim, int max_len)
    : identifier_(std::move(identifier)),
      vocab_(std::move(vocab)),
      hidden_dim_(hidden_dim),
      max_len_(max_len) {
  if (identifier_.empty()) throw ConfigError("pretrained encoder: empty identifier");
  if (hidden_dim_ <= 0 || max_len_ <= 0)
    throw ConfigError("pretrained encoder: dimensions must be positive");
}

nn::Var PretrainedEncoderStub::encode_on_tape(Tape&, std::vector<int>) {
  throw ConfigError("pretrained encoder '" + identifier_ +
                    "' has no local weights; this build executes the tiny backend only");
}

PretrainedGeneratorStub::PretrainedGeneratorStub(std::string identifier, Vocabulary vocab,
                                                 int max_len, int max_new_tokens)
    : identifier_(std::move(identifier)),
      vocab_(std::move(vocab)),
      max_len_(max_len),
      max_new_tokens_(max_new_tokens) {
  if (identifier_.empty()) throw ConfigError("pretrained generator: empty identifier");
}

nn::Var PretrainedGeneratorStub::lm_logits_on_tape(Tape&, const std::vector<int>&) {
  throw ConfigError("pretrained generator '" + identifier_ +
                    "' has no local weights; this build executes the tiny backend only");
}

// ------------------------------ language-model training ------------------------------

namespace {

// Training/evaluation view of one text: <s> tokens <eot>, truncated to the
// model budget.
std::vector<int> lm_sequence(GeneratorBackend& gen, const std::string& text) {
  std::vector<int> ids = gen.vocab().ids_for(gen.tokenize(text));
  ids.insert(ids.begin(), Vocabulary::kSep);
  ids.push_back(Vocabulary::kEot);
  if (static_cast<int>(ids.size()) > gen.max_len()) {
    std::cerr << "[generator] warning: truncating training text of " << ids.size()
              << " tokens to max_len=" << gen.max_len() << "\n";
    ids.resize(gen.max_len());
  }
  return ids;
}

}  // namespace

double average_nll(GeneratorBackend& gen, const std::vector<std::string>& texts) {
  if (texts.empty()) throw ConfigError("average_nll: no texts");
  double total = 0.0;
  long count = 0;
  for (const auto& text : texts) {
    std::vector<int> ids = lm_sequence(gen, text);
    if (ids.size() < 2) continue;
    std::vector<int> inputs(ids.begin(), ids.end() - 1);
    Tape tape(false);
    Var logits = gen.lm_logits_on_tape(tape, inputs);
    const Matrix& z = tape.value(logits);
    for (std::size_t pos = 0; pos + 1 < ids.size(); ++pos) {
      double m = z.row(static_cast<int>(pos)).maxCoeff();
      double lse = m + std::log((z.row(static_cast<int>(pos)).array() - m).exp().sum());
      total += lse - z(static_cast<int>(pos), ids[pos + 1]);
      ++count;
    }
  }
  if (count == 0) throw ConsistencyError("average_nll: texts contained no scorable tokens");
  return total / count;
}

FineTuneReport fine_tune_lm(GeneratorBackend& gen, const std::vector<std::string>& texts,
                            const TrainingConfig& config) {
  config.validate();
  if (texts.empty()) throw ConfigError("fine_tune_lm: empty training corpus");

  FineTuneReport report;
  report.nll_before = average_nll(gen, texts);

  nn::Adam opt(gen.parameters(), config.learning_rate);
  Rng rng(config.seed);
  std::vector<std::size_t> order(texts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t batch_end = std::min(order.size(), i + config.batch_size);
      int in_batch = 0;
      opt.zero_grad();
      for (; i < batch_end; ++i) {
        std::vector<int> ids = lm_sequence(gen, texts[order[i]]);
        if (ids.size() < 2) continue;
        std::vector<int> inputs(ids.begin(), ids.end() - 1);
        std::vector<int> targets(ids.begin() + 1, ids.end());
        std::vector<unsigned char> active(targets.size(), 1);
        Tape tape;
        Var loss = tape.mean_softmax_xent(gen.lm_logits_on_tape(tape, inputs), targets, active);
        tape.backward(loss);
        ++in_batch;
      }
      if (in_batch > 0) {
        for (nn::Parameter* p : gen.parameters()) p->grad /= in_batch;
        opt.step();
      }
    }
    report.epoch_nll.push_back(average_nll(gen, texts));
  }
  report.nll_after = report.epoch_nll.back();
  return report;
}

std::string greedy_decode(GeneratorBackend& gen, const std::string& prompt) {
  std::vector<int> ids = gen.vocab().ids_for(gen.tokenize(prompt));
  ids.insert(ids.begin(), Vocabulary::kSep);
  if (static_cast<int>(ids.size()) >= gen.max_len())
    throw FormatError("greedy_decode: prompt of " + std::to_string(ids.size()) +
                      " tokens exceeds the generator budget of " +
                      std::to_string(gen.max_len()));
  if (ids.back() == Vocabulary::kEot) return "";

  std::vector<std::string> generated;
  for (int step = 0; step < gen.max_new_tokens(); ++step) {
    Tape tape(false);
    Var logits = gen.lm_logits_on_tape(tape, ids);
    const Matrix& z = tape.value(logits);
    int last = static_cast<int>(z.rows()) - 1;
    int best = 0;
    for (int c = 1; c < z.cols(); ++c) {
      if (z(last, c) > z(last, best)) best = c;
    }
    if (best == Vocabulary::kEot || best == Vocabulary::kNewline) break;
    generated.push_back(gen.vocab().token(best));
    ids.push_back(best);
    if (static_cast<int>(ids.size()) >= gen.max_len()) break;
  }
  return detokenize(generated);
}

// ------------------------------ checkpoints ------------------------------

namespace {
void append_doubles(std::string& out, const Matrix& m) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      char buf[sizeof(double)];
      std::memcpy(buf, &v, sizeof(double));
      out.append(buf, sizeof(double));
    }
  }
}
}  // namespace

void save_checkpoint(const fs::path& dir, const std::string& kind, const Vocabulary& vocab,
                     std::uint64_t seed, const nlohmann::json& config,
                     const std::vector<nn::Parameter*>& params) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  nlohmann::json tensors = nlohmann::json::array();
  std::string blob;
  for (const nn::Parameter* p : params) {
    tensors.push_back({{"name", p->name}, {"rows", p->rows()}, {"cols", p->cols()}});
    append_doubles(blob, p->value);
  }
  nlohmann::json meta = {{"format_version", 1},
                         {"kind", kind},
                         {"vocab_hash", to_hex(vocab.content_hash())},
                         {"seed", seed},
                         {"config", config},
                         {"tensors", tensors}};
  atomic_write(tmp / "metadata.json", meta.dump(2) + "\n");
  atomic_write(tmp / "params.bin", blob);

  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

nlohmann::json checkpoint_metadata(const fs::path& dir) {
  fs::path meta_file = dir / "metadata.json";
  if (!fs::exists(meta_file)) throw IoError("checkpoint metadata missing: " + meta_file.string());
  return nlohmann::json::parse(read_file(meta_file));
}

void load_checkpoint(const fs::path& dir, const std::string& expected_kind,
                     const Vocabulary& vocab, const std::vector<nn::Parameter*>& params) {
  nlohmann::json meta = checkpoint_metadata(dir);
  std::string kind = meta.at("kind").get<std::string>();
  if (kind != expected_kind)
    throw ConsistencyError("checkpoint '" + dir.string() + "' holds a '" + kind +
                           "' model, expected '" + expected_kind + "'");
  std::string hash = meta.at("vocab_hash").get<std::string>();
  if (hash != to_hex(vocab.content_hash()))
    throw ConsistencyError("checkpoint '" + dir.string() +
                           "' was trained with a different vocabulary");
  const nlohmann::json& tensors = meta.at("tensors");
  if (tensors.size() != params.size())
    throw ConsistencyError("checkpoint '" + dir.string() + "' holds " +
                           std::to_string(tensors.size()) + " tensors, expected " +
                           std::to_string(params.size()));
  std::string blob = read_file(dir / "params.bin");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter& p = *params[i];
    const nlohmann::json& t = tensors[i];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<int>() != p.rows() ||
        t.at("cols").get<int>() != p.cols())
      throw ConsistencyError("checkpoint tensor mismatch at '" + p.name + "'");
    std::size_t need = static_cast<std::size_t>(p.rows()) * p.cols() * sizeof(double);
    if (offset + need > blob.size())
      throw FormatError("checkpoint payload shorter than its metadata describes");
    for (int r = 0; r < p.rows(); ++r) {
      for (int c = 0; c < p.cols(); ++c) {
        double v;
        std::memcpy(&v, blob.data() + offset, sizeof(double));
        p.value(r, c) = v;
        offset += sizeof(double);
      }
    }
  }
  if (offset != blob.size())
    throw FormatError("checkpoint payload longer than its metadata describes");
}

}  // namespace lirex
