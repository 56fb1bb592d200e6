#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "lirex/backends.hpp"

using namespace lirex;
namespace fs = std::filesystem;

namespace {

TinyBackendConfig small_config() {
  TinyBackendConfig cfg;
  cfg.hidden_dim = 16;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.ffn_dim = 32;
  cfg.max_len = 32;
  cfg.max_new_tokens = 16;
  return cfg;
}

Vocabulary tiny_vocab() {
  return Vocabulary::build_from_texts(
      {"the quick dog runs fast .", "a slow cat sleeps now .", "birds fly high today ."});
}

}  // namespace

TEST_CASE("vocabulary reserves special ids and falls back to unknown") {
  Vocabulary v = tiny_vocab();
  CHECK(v.id(kSepText) == Vocabulary::kSep);
  CHECK(v.id(kUnkText) == Vocabulary::kUnk);
  CHECK(v.id(kEotText) == Vocabulary::kEot);
  CHECK(v.id("\n") == Vocabulary::kNewline);
  CHECK(v.id("dog") > 3);
  CHECK(v.id("zebra") == Vocabulary::kUnk);
  CHECK(v.token(v.id("dog")) == "dog");
}

TEST_CASE("vocabulary build is deterministic and hash tracks content") {
  Vocabulary a = tiny_vocab();
  Vocabulary b = tiny_vocab();
  CHECK(a.size() == b.size());
  CHECK(a.content_hash() == b.content_hash());
  Vocabulary c = Vocabulary::build_from_texts({"completely different words"});
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("vocabulary save/load round trip preserves ids") {
  fs::path dir = fs::temp_directory_path() / "lirex_vocab_test";
  fs::remove_all(dir);
  Vocabulary v = tiny_vocab();
  v.save(dir / "vocab.txt");
  Vocabulary r = Vocabulary::load(dir / "vocab.txt");
  CHECK(r.size() == v.size());
  CHECK(r.content_hash() == v.content_hash());
  CHECK(r.id("dog") == v.id("dog"));
  fs::remove_all(dir);
}

TEST_CASE("encoder output shape follows the input and is bitwise deterministic") {
  TinyEncoder enc(tiny_vocab(), small_config(), 11);
  TokenSeq toks = enc.tokenize("the dog sleeps .");
  nn::Matrix h1 = enc.encode(toks);
  nn::Matrix h2 = enc.encode(toks);
  CHECK(h1.rows() == 4);
  CHECK(h1.cols() == 16);
  CHECK((h1 - h2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("same seed same encoder, different seed different encoder") {
  TinyEncoder a(tiny_vocab(), small_config(), 5);
  TinyEncoder b(tiny_vocab(), small_config(), 5);
  TinyEncoder c(tiny_vocab(), small_config(), 6);
  TokenSeq toks = a.tokenize("birds fly");
  CHECK((a.encode(toks) - b.encode(toks)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.encode(toks) - c.encode(toks)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("over-length input is truncated with a recorded warning, never silently") {
  TinyBackendConfig cfg = small_config();
  cfg.max_len = 4;
  TinyEncoder enc(tiny_vocab(), cfg, 1);
  TokenSeq toks = enc.tokenize("the quick dog runs fast today and tomorrow");
  REQUIRE(toks.size() > 4);
  CHECK(enc.truncation_count() == 0);
  nn::Matrix h = enc.encode(toks);
  CHECK(h.rows() == 4);
  CHECK(enc.truncation_count() == 1);
}

TEST_CASE("separator tokens map to the separator id") {
  TinyEncoder enc(tiny_vocab(), small_config(), 2);
  TokenSeq seq;
  seq.push_back({kSepText, 0, 0, true});
  seq.push_back({"dog", 0, 3, false});
  std::vector<int> ids = enc.token_ids(seq);
  CHECK(ids[0] == Vocabulary::kSep);
  CHECK(ids[1] == enc.vocab().id("dog"));
}

TEST_CASE("training config validation") {
  TrainingConfig ok{4, 1e-3, 2, 0};
  CHECK_NOTHROW(ok.validate());
  TrainingConfig bad = ok;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fine_tune_lm lowers the training loss and refuses empty corpora") {
  std::vector<std::string> texts(50, "the quick dog runs fast .");
  Vocabulary v = Vocabulary::build_from_texts(texts);
  TinyGenerator gen(v, small_config(), 3);

  TrainingConfig cfg{8, 2e-3, 20, 42};
  FineTuneReport rep = fine_tune_lm(gen, texts, cfg);
  CHECK(rep.nll_after < rep.nll_before);
  // Loss is non-increasing over the first epochs, within noise.
  REQUIRE(rep.epoch_nll.size() >= 5);
  for (int k = 0; k + 1 < 5; ++k) CHECK(rep.epoch_nll[k + 1] <= rep.epoch_nll[k] + 0.02);

  TinyGenerator fresh(v, small_config(), 3);
  CHECK_THROWS_AS(fine_tune_lm(fresh, {}, cfg), ConfigError);
}

TEST_CASE("greedy decoding reproduces an overfitted text verbatim and is deterministic") {
  std::string text = "the quick dog runs fast .";
  std::vector<std::string> texts(30, text);
  Vocabulary v = Vocabulary::build_from_texts(texts);
  TinyGenerator gen(v, small_config(), 9);
  fine_tune_lm(gen, texts, {8, 3e-3, 40, 7});

  std::string out1 = greedy_decode(gen, "the quick");
  std::string out2 = greedy_decode(gen, "the quick");
  CHECK(out1 == out2);
  CHECK(out1 == "dog runs fast .");
}

TEST_CASE("greedy decoding stops at newlines") {
  std::vector<std::string> texts(30, "alpha beta\ngamma delta");
  Vocabulary v = Vocabulary::build_from_texts(texts);
  TinyGenerator gen(v, small_config(), 13);
  fine_tune_lm(gen, texts, {8, 3e-3, 40, 7});
  std::string out = greedy_decode(gen, "alpha");
  CHECK(out == "beta");
}

TEST_CASE("greedy decoding edge cases") {
  Vocabulary v = tiny_vocab();
  TinyBackendConfig cfg = small_config();
  cfg.max_len = 8;
  TinyGenerator gen(v, cfg, 21);
  // Prompt already terminated: empty continuation without any model call.
  CHECK(greedy_decode(gen, "the dog <eot>") == "");
  // Prompt over the budget is rejected.
  CHECK_THROWS_AS(greedy_decode(gen, "the quick dog runs fast now and then again"),
                  FormatError);
}

TEST_CASE("checkpoint round trip restores parameters bitwise") {
  fs::path dir = fs::temp_directory_path() / "lirex_ckpt_test";
  fs::remove_all(dir);
  Vocabulary v = tiny_vocab();
  TinyEncoder a(v, small_config(), 17);
  TokenSeq toks = a.tokenize("the dog runs");
  nn::Matrix before = a.encode(toks);

  save_checkpoint(dir / "enc", "tiny-encoder", v, 17, {{"note", "test"}}, a.parameters());

  TinyEncoder b(v, small_config(), 999);  // different random init
  CHECK((b.encode(toks) - before).cwiseAbs().maxCoeff() > 0.0);
  load_checkpoint(dir / "enc", "tiny-encoder", v, b.parameters());
  CHECK((b.encode(toks) - before).cwiseAbs().maxCoeff() == 0.0);

  nlohmann::json meta = checkpoint_metadata(dir / "enc");
  CHECK(meta.at("kind") == "tiny-encoder");
  CHECK(meta.at("seed") == 17);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loading verifies vocabulary hash and model kind") {
  fs::path dir = fs::temp_directory_path() / "lirex_ckpt_guard";
  fs::remove_all(dir);
  Vocabulary v = tiny_vocab();
  TinyEncoder a(v, small_config(), 4);
  save_checkpoint(dir / "enc", "tiny-encoder", v, 4, {}, a.parameters());

  Vocabulary other = Vocabulary::build_from_texts({"unrelated tokens entirely"});
  TinyEncoder b(other, small_config(), 4);
  CHECK_THROWS_AS(load_checkpoint(dir / "enc", "tiny-encoder", other, b.parameters()),
                  ConsistencyError);

  TinyEncoder c(v, small_config(), 4);
  CHECK_THROWS_AS(load_checkpoint(dir / "enc", "tiny-generator", v, c.parameters()),
                  ConsistencyError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing", "tiny-encoder", v, c.parameters()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("pretrained stubs expose full-scale geometry but refuse to run") {
  Vocabulary v = tiny_vocab();
  PretrainedEncoderStub enc("roberta-base", v);
  CHECK(enc.hidden_dim() == 768);
  CHECK(enc.kind() == "pretrained:roberta-base");
  CHECK_THROWS_AS(enc.encode(enc.tokenize("a dog")), ConfigError);

  PretrainedGeneratorStub gen("gpt2-medium", v);
  CHECK_THROWS_AS(greedy_decode(gen, "a dog"), ConfigError);
  CHECK_THROWS_AS(PretrainedEncoderStub("", v), ConfigError);
}
