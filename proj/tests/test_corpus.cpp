#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "lirex/corpus.hpp"
#include "lirex/errors.hpp"
#include "lirex/io_util.hpp"
#include "lirex/rng.hpp"
#include "lirex/text.hpp"

using namespace lirex;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "lirex_corpus_test";
  fs::create_directories(dir);
  return dir;
}

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path p = temp_dir() / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

}  // namespace

TEST_CASE("csv split loads all well-formed rows") {
  fs::path p = write_temp(
      "basic.csv",
      "instance_id,premise,hypothesis,gold_label,gold_explanation,highlight_spans\n"
      "a1,A dog runs fast .,A dog moves .,entailment,Running is moving .,2-2\n"
      "a2,\"A man, smiling\",A man frowns .,contradiction,Smiling is not frowning .,2-2\n"
      "a3,A cat sits .,A cat naps .,neutral,Sitting does not imply napping .,2-2\n");
  CorpusSplit split = load_esnli(p, "dev");
  CHECK(split.name == "dev");
  CHECK(split.instances.size() == 3);
  CHECK(split.skipped_rows == 0);
  CHECK(split.instances[0].base.instance_id == "a1");
  CHECK(split.instances[1].base.premise == "A man, smiling");  // quoted comma survives
  CHECK(split.instances[1].base.gold_label == Label::contradiction);
  CHECK(split.instances[2].gold_explanation == "Sitting does not imply napping .");
  REQUIRE(split.instances[0].highlight_spans.size() == 1);
  CHECK(split.instances[0].highlight_spans[0].start_word == 2);
  CHECK(split.instances[0].highlight_spans[0].end_word == 2);
}

TEST_CASE("tsv is sniffed from the header row") {
  fs::path p = write_temp(
      "basic.tsv",
      "instance_id\tpremise\thypothesis\tgold_label\tgold_explanation\thighlight_spans\n"
      "t1\tA bird flies .\tA bird is airborne .\tentailment\tFlying means airborne .\t3-3\n");
  CorpusSplit split = load_esnli(p, "train");
  REQUIRE(split.instances.size() == 1);
  CHECK(split.instances[0].base.hypothesis == "A bird is airborne .");
}

TEST_CASE("unusable rows are counted and dropped") {
  fs::path p = write_temp(
      "dirty.csv",
      "instance_id,premise,hypothesis,gold_label,gold_explanation,highlight_spans\n"
      "b1,A dog runs .,A dog moves .,entailment,Running is moving .,1-1\n"
      "b2,A dog runs .,A dog moves .,-,No consensus .,1-1\n"             // "-" label
      "b3,,A dog moves .,entailment,Empty premise .,1-1\n"               // empty premise
      "b4,A dog runs .,A dog moves .,entailment,,1-1\n"                  // empty explanation
      "b5,A dog runs .,A dog moves .,entailment,Bad span text .,9-x\n"   // malformed span
      "b6,A dog runs .,A dog moves .,entailment,Out of bounds .,0-40\n"  // span past last word
      "b1,A dog runs .,A dog moves .,entailment,Duplicate id .,1-1\n"    // duplicate id
      "b7,A dog runs .,A dog moves .,maybe,Unknown label .,1-1\n"        // unknown label
      "b8,A dog runs .,A cat sleeps .,contradiction,Dogs are not cats .,0-1\n");
  CorpusSplit split = load_esnli(p);
  CHECK(split.instances.size() == 2);
  CHECK(split.skipped_rows == 7);
  CHECK(split.instances[0].base.instance_id == "b1");
  CHECK(split.instances[1].base.instance_id == "b8");
}

TEST_CASE("plain split loader requires no annotation columns") {
  fs::path p = write_temp("plain.csv",
                          "premise,hypothesis,gold_label\n"
                          "A dog runs .,A dog moves .,entailment\n"
                          "A dog runs .,A cat sits .,neutral\n");
  CorpusSplit split = load_nli(p, "dev_matched");
  REQUIRE(split.instances.size() == 2);
  CHECK(split.instances[0].base.instance_id == "r1");  // synthesized from row number
  CHECK(split.instances[1].base.instance_id == "r2");
  CHECK(split.instances[0].gold_explanation.empty());
  CHECK_FALSE(split.instances[0].is_annotated());
}

TEST_CASE("missing required column raises a format error") {
  fs::path p = write_temp("nohyp.csv", "premise,gold_label\nA dog runs .,entailment\n");
  CHECK_THROWS_AS(load_nli(p), FormatError);
  CHECK_THROWS_AS(load_esnli(write_temp("noexpl.csv",
                                        "premise,hypothesis,gold_label\n"
                                        "A dog runs .,A dog moves .,entailment\n")),
                  FormatError);
  CHECK_THROWS_AS(load_nli(temp_dir() / "does_not_exist.csv"), IoError);
}

TEST_CASE("loading the same file twice yields identical splits") {
  fs::path p = write_temp(
      "det.csv",
      "instance_id,premise,hypothesis,gold_label,gold_explanation,highlight_spans\n"
      "d1,A dog runs fast .,A dog moves .,entailment,Running is moving .,2-2\n"
      "d2,A cat sits .,A cat naps .,neutral,Sitting does not imply napping .,2-2\n");
  CorpusSplit a = load_esnli(p);
  CorpusSplit b = load_esnli(p);
  REQUIRE(a.instances.size() == b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    CHECK(a.instances[i].base.instance_id == b.instances[i].base.instance_id);
    CHECK(a.instances[i].base.premise == b.instances[i].base.premise);
    CHECK(a.instances[i].gold_explanation == b.instances[i].gold_explanation);
  }
}

TEST_CASE("overlapping highlight spans are merged and ordered") {
  fs::path p = write_temp(
      "spans.csv",
      "instance_id,premise,hypothesis,gold_label,gold_explanation,highlight_spans\n"
      "s1,A red dog runs in the park .,A big red dog runs around .,entailment,"
      "Colors and motion match .,4-5;1-2;2-3\n");
  CorpusSplit split = load_esnli(p);
  REQUIRE(split.instances.size() == 1);
  const auto& spans = split.instances[0].highlight_spans;
  REQUIRE(spans.size() == 2);  // 1-2 and 2-3 merge into 1-3
  CHECK(spans[0].start_word == 1);
  CHECK(spans[0].end_word == 3);
  CHECK(spans[1].start_word == 4);
  CHECK(spans[1].end_word == 5);
}

TEST_CASE("explanations that restate an input are held out") {
  CorpusSplit split;
  split.name = "train";
  auto add = [&](const std::string& id, const std::string& expl) {
    AnnotatedInstance inst;
    inst.base.instance_id = id;
    inst.base.premise = "A man plays a guitar on stage .";
    inst.base.hypothesis = "A man plays an instrument .";
    inst.base.gold_label = Label::entailment;
    inst.gold_explanation = expl;
    split.instances.push_back(inst);
  };
  add("k1", "A guitar is an instrument .");
  add("k2", "Playing a guitar means playing an instrument .");
  add("h1", "A man plays a guitar on stage .");                    // premise verbatim
  add("h2", "Because a man plays a guitar on stage, he plays .");  // premise embedded
  add("k3", "Guitars are instruments .");
  add("h3", "a man plays an INSTRUMENT!");  // hypothesis modulo case/punctuation
  add("k4", "Stage performers play instruments .");
  add("k5", "One who plays a guitar plays an instrument .");
  add("k6", "Being on stage suggests a performance .");
  add("k7", "Guitar playing is instrumental music .");

  FilterResult result = filter_noninformative(split);
  CHECK(result.kept.instances.size() == 7);
  CHECK(result.held_out.instances.size() == 3);
  for (const auto& inst : result.held_out.instances)
    CHECK(inst.base.instance_id[0] == 'h');
  for (const auto& inst : result.kept.instances)
    CHECK(inst.base.instance_id[0] == 'k');

  // Filtering the kept half again removes nothing further.
  FilterResult again = filter_noninformative(result.kept);
  CHECK(again.kept.instances.size() == 7);
  CHECK(again.held_out.instances.empty());
}

TEST_CASE("highlight spans become token masks over the hypothesis") {
  AnnotatedInstance inst;
  inst.base.instance_id = "m1";
  inst.base.premise = "A man drives to work .";
  inst.base.hypothesis = "A man is driving a car .";
  inst.base.gold_label = Label::entailment;
  inst.gold_explanation = "Driving implies a car .";
  inst.highlight_spans = {{5, 5}};  // the word "car"

  TokenSeq toks = tokenize_words(inst.base.hypothesis);
  // A man is driving a car .  -> 7 word-level tokens
  REQUIRE(toks.size() == 7);
  RationaleMask mask = mask_from_highlights(inst, toks);
  std::vector<int> expected = {0, 0, 0, 0, 0, 1, 0};
  CHECK(mask.token_labels == expected);
  for (std::size_t i = 0; i < mask.token_probs.size(); ++i)
    CHECK(mask.token_probs[i] == static_cast<double>(expected[i]));
}

TEST_CASE("separator tokens always receive label zero") {
  AnnotatedInstance inst;
  inst.base.instance_id = "m2";
  inst.base.premise = "A man drives .";
  inst.base.hypothesis = "A man drives a car .";
  inst.base.gold_label = Label::entailment;
  inst.gold_explanation = "Cars are driven .";
  inst.highlight_spans = {{0, 5}};  // every word highlighted

  TokenSeq toks = tokenize_words(inst.base.hypothesis);
  Token sep;
  sep.text = "<s>";
  sep.separator = true;
  toks.insert(toks.begin(), sep);
  toks.push_back(sep);
  RationaleMask mask = mask_from_highlights(inst, toks);
  REQUIRE(mask.token_labels.size() == toks.size());
  CHECK(mask.token_labels.front() == 0);
  CHECK(mask.token_labels.back() == 0);
  for (std::size_t i = 1; i + 1 < mask.token_labels.size(); ++i)
    CHECK(mask.token_labels[i] == 1);
}

TEST_CASE("token label matches character overlap on random spans") {
  Rng rng(2026);
  const std::string hyp = "The quick brown fox jumps over the lazy sleeping dog today .";
  TokenSeq words = whitespace_words(hyp);
  TokenSeq toks = tokenize_words(hyp);
  for (int trial = 0; trial < 200; ++trial) {
    AnnotatedInstance inst;
    inst.base.instance_id = "p" + std::to_string(trial);
    inst.base.premise = "A premise .";
    inst.base.hypothesis = hyp;
    inst.base.gold_label = Label::neutral;
    inst.gold_explanation = "An explanation .";
    int n = static_cast<int>(words.size());
    int spans = static_cast<int>(rng.uniform_int(0, 3));
    for (int s = 0; s < spans; ++s) {
      int a = static_cast<int>(rng.uniform_int(0, static_cast<std::uint64_t>(n - 1)));
      int b = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(a),
                                               static_cast<std::uint64_t>(n - 1)));
      inst.highlight_spans.push_back({a, b});
    }
    RationaleMask mask = mask_from_highlights(inst, toks);
    for (std::size_t t = 0; t < toks.size(); ++t) {
      // Oracle: per-character membership in any highlighted word range.
      bool hit = false;
      for (const auto& sp : inst.highlight_spans) {
        std::size_t lo = words[sp.start_word].begin;
        std::size_t hi = words[sp.end_word].end;
        for (std::size_t c = toks[t].begin; c < toks[t].end; ++c)
          hit = hit || (c >= lo && c < hi);
      }
      CHECK(mask.token_labels[t] == (hit ? 1 : 0));
    }
  }
}

TEST_CASE("out-of-bounds spans and foreign tokenizations are rejected") {
  AnnotatedInstance inst;
  inst.base.instance_id = "x1";
  inst.base.premise = "A premise .";
  inst.base.hypothesis = "A man walks .";
  inst.base.gold_label = Label::neutral;
  inst.gold_explanation = "An explanation .";
  inst.highlight_spans = {{0, 9}};  // only 4 words exist
  CHECK_THROWS_AS(mask_from_highlights(inst, tokenize_words(inst.base.hypothesis)),
                  ConsistencyError);

  inst.highlight_spans = {{1, 1}};
  TokenSeq wrong = tokenize_words("A dog sleeps .");  // offsets fit, text differs
  CHECK_THROWS_AS(mask_from_highlights(inst, wrong), ConsistencyError);
}

TEST_CASE("jsonl round trip preserves every field") {
  CorpusSplit split;
  split.name = "train";
  AnnotatedInstance a;
  a.base = NLIInstance{"j1", "A man plays a guitar .", "A man plays an instrument .", Label::entailment};
  a.gold_explanation = "A guitar is an instrument .";
  a.highlight_spans = {{3, 4}};
  AnnotatedInstance b;
  b.base = NLIInstance{"j2", "A cat sits .", "A cat flies .", Label::contradiction};
  b.gold_explanation = "Cats cannot fly .";
  split.instances = {a, b};

  fs::path p = temp_dir() / "round.jsonl";
  write_jsonl(split, p);
  CorpusSplit back = read_jsonl(p, "train");
  REQUIRE(back.instances.size() == 2);
  CHECK(back.instances[0].base.instance_id == "j1");
  CHECK(back.instances[0].base.premise == a.base.premise);
  CHECK(back.instances[0].base.gold_label == Label::entailment);
  CHECK(back.instances[0].gold_explanation == a.gold_explanation);
  REQUIRE(back.instances[0].highlight_spans.size() == 1);
  CHECK(back.instances[0].highlight_spans[0].start_word == 3);
  CHECK(back.instances[0].highlight_spans[0].end_word == 4);
  CHECK(back.instances[1].base.gold_label == Label::contradiction);

  // Byte-identical on rewrite.
  fs::path q = temp_dir() / "round2.jsonl";
  write_jsonl(back, q);
  CHECK(read_file(p) == read_file(q));
}
