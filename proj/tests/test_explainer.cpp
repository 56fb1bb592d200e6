#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <string>
#include <vector>

#include "lirex/backends.hpp"
#include "lirex/explainer.hpp"
#include "lirex/rng.hpp"

using namespace lirex;

namespace {

Vocabulary prompt_vocab(const std::vector<std::string>& texts) {
  std::vector<std::string> extra = {"Premise", "Hypothesis", "Explanation", ":", "[", "]"};
  for (Label l : kAllLabels) extra.push_back(to_string(l));
  return Vocabulary::build_from_texts(texts, extra);
}

}  // namespace

TEST_CASE("brackets wrap the word core and leave punctuation outside") {
  CHECK(bracket_word("instrument") == "[instrument]");
  CHECK(bracket_word("instrument.") == "[instrument].");
  CHECK(bracket_word("\"cat\",") == "\"[cat]\",");
  CHECK(bracket_word("it's") == "[it's]");
  CHECK(bracket_word("...") == "[...]");
  CHECK(bracket_word("(warm)") == "([warm])");
}

TEST_CASE("bracketing matches the reference rendering") {
  std::string hyp = "A man is playing an instrument.";
  std::vector<int> labels = {0, 0, 0, 0, 0, 1};
  CHECK(apply_rationale_brackets(hyp, labels) == "A man is playing an [instrument].");
  CHECK(strip_brackets("A man is playing an [instrument].") == hyp);
}

TEST_CASE("bracket and strip invert each other on random sentences") {
  std::vector<std::string> pool = {"a",    "man",  "plays", "the",  "guitar", "loudly",
                                   "dog,", "cat.", "\"x\"", "it's", "on",     "stage!"};
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(0, 7));
    std::string hyp;
    std::vector<int> labels(n);
    for (int w = 0; w < n; ++w) {
      if (w) hyp += " ";
      hyp += pool[rng.uniform_int(0, pool.size() - 1)];
      labels[w] = static_cast<int>(rng.uniform_int(0, 1));
    }
    std::string bracketed = apply_rationale_brackets(hyp, labels);
    CHECK(strip_brackets(bracketed) == hyp);
    // All-zero and all-one masks round trip as well.
    CHECK(strip_brackets(apply_rationale_brackets(hyp, std::vector<int>(n, 0))) == hyp);
    CHECK(strip_brackets(apply_rationale_brackets(hyp, std::vector<int>(n, 1))) == hyp);
  }
}

TEST_CASE("prompt text is exact and label-blind") {
  std::string prompt =
      build_prompt("A man plays a guitar on stage .", "A man is playing an instrument .",
                   {0, 0, 0, 0, 0, 1, 0});
  CHECK(prompt ==
        "Premise: A man plays a guitar on stage .\n"
        "Hypothesis: A man is playing an [instrument] .\n"
        "Explanation:");
  for (Label l : kAllLabels) CHECK(prompt.find(to_string(l)) == std::string::npos);

  std::string training = build_prompt("A man plays a guitar on stage .",
                                      "A man is playing an instrument .", {0, 0, 0, 0, 0, 1, 0},
                                      "A guitar is an instrument .");
  CHECK(training == prompt + " A guitar is an instrument .");
}

TEST_CASE("prompt construction rejects malformed inputs") {
  CHECK_THROWS_AS(build_prompt("two\nlines", "ok", {1}), FormatError);
  CHECK_THROWS_AS(build_prompt("ok", "has [brackets]", {1, 1}), FormatError);
  CHECK_THROWS_AS(build_prompt("ok", "three words here", {1}), FormatError);  // label count
  CHECK_THROWS_AS(build_prompt("ok", "fine", {1}, "multi\nline"), FormatError);
}

TEST_CASE("parsing inverts prompt construction on random cases") {
  std::vector<std::string> pool = {"a",   "red",  "dog",   "runs!", "fast,", "it's",
                                   "the", "lazy", "cat.",  "park", "(now)", "ok"};
  Rng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    auto sentence = [&](int lo, int hi) {
      int n = lo + static_cast<int>(rng.uniform_int(0, static_cast<std::uint64_t>(hi - lo)));
      std::string s;
      for (int w = 0; w < n; ++w) {
        if (w) s += " ";
        s += pool[rng.uniform_int(0, pool.size() - 1)];
      }
      return s;
    };
    std::string premise = sentence(1, 6);
    std::string hypothesis = sentence(1, 6);
    std::size_t words = whitespace_words(hypothesis).size();
    std::vector<int> labels(words);
    int style = static_cast<int>(rng.uniform_int(0, 2));
    for (std::size_t w = 0; w < words; ++w)
      labels[w] = style == 0 ? 0 : style == 1 ? 1 : static_cast<int>(rng.uniform_int(0, 1));
    std::string explanation = trial % 2 ? sentence(1, 5) : std::string();

    ParsedPrompt parsed = parse_prompt(build_prompt(premise, hypothesis, labels, explanation));
    CHECK(parsed.premise == premise);
    CHECK(parsed.hypothesis == hypothesis);
    CHECK(parsed.word_labels == labels);
    CHECK(parsed.explanation == explanation);
  }
}

TEST_CASE("parsing rejects structural damage") {
  CHECK_THROWS_AS(parse_prompt("Premise: a\nHypothesis: b"), FormatError);  // two lines
  CHECK_THROWS_AS(parse_prompt("Premise: a\nHypothesis: b\nAnswer: c"), FormatError);
  CHECK_THROWS_AS(parse_prompt("premise: a\nHypothesis: b\nExplanation:"), FormatError);
  // Bracket cutting through a word core is not word-aligned.
  CHECK_THROWS_AS(parse_prompt("Premise: a\nHypothesis: a [do]g runs\nExplanation:"),
                  FormatError);
  CHECK_THROWS_AS(parse_prompt("Premise: a\nHypothesis: a [ dog\nExplanation:"), FormatError);
  CHECK_NOTHROW(parse_prompt("Premise: a\nHypothesis: a [dog] runs\nExplanation:"));
}

TEST_CASE("word labels take the maximum probability of overlapping tokens") {
  std::string hyp = "A man runs, very fast .";
  // Token stream: <s> A man runs , very fast . <s>
  TokenSeq seq;
  Token sep;
  sep.text = "<s>";
  sep.separator = true;
  seq.push_back(sep);
  for (const Token& t : tokenize_words(hyp)) seq.push_back(t);
  seq.push_back(sep);
  REQUIRE(seq.size() == 9);

  RationaleMask mask;
  mask.token_probs = {0.0, 0.1, 0.2, 0.3, 0.9, 0.4, 0.95, 0.05, 0.0};
  mask.token_labels = {0, 0, 0, 0, 1, 0, 1, 0, 0};
  std::vector<int> labels = project_to_words(hyp, seq, mask);
  // Words: A man runs, very fast .  -> "runs," spans tokens "runs"(0.3) and ","(0.9)
  REQUIRE(labels.size() == 6);
  CHECK(labels == std::vector<int>{0, 0, 1, 0, 1, 0});

  RationaleMask wrong;
  wrong.token_probs = {0.0};
  wrong.token_labels = {0};
  CHECK_THROWS_AS(project_to_words(hyp, seq, wrong), ConsistencyError);
}

TEST_CASE("held-out instances are refused by generator training") {
  CorpusSplit split;
  split.name = "train";
  AnnotatedInstance inst;
  inst.base = NLIInstance{"h1", "A dog runs .", "A dog moves .", Label::entailment};
  inst.gold_explanation = "Running is moving .";
  inst.highlight_spans = {{2, 2}};
  split.instances = {inst};

  Vocabulary vocab = prompt_vocab({"A dog runs .", "A dog moves .", "Running is moving ."});
  TinyBackendConfig cfg;
  cfg.max_len = 64;
  TinyGenerator gen(vocab, cfg, 2);
  nn::Matrix before = gen.parameters().front()->value;

  TrainingConfig tc;
  CHECK_THROWS_AS(train_generator(gen, split, {"h1"}, tc), ConsistencyError);
  CHECK(gen.parameters().front()->value == before);
}

TEST_CASE("a memorizing generator reproduces gold explanations from prompts") {
  CorpusSplit split;
  split.name = "train";
  auto add = [&](const std::string& id, const std::string& prem, const std::string& hyp,
                 const std::string& expl, std::vector<HighlightSpan> spans) {
    AnnotatedInstance inst;
    inst.base = NLIInstance{id, prem, hyp, Label::entailment};
    inst.gold_explanation = expl;
    inst.highlight_spans = std::move(spans);
    split.instances.push_back(inst);
  };
  add("m1", "A man plays a guitar .", "A man plays an instrument .",
      "A guitar is an instrument .", {{4, 4}});
  add("m2", "A dog runs in the park .", "A dog is outside .", "The park is outside .",
      {{3, 3}});

  std::vector<std::string> texts;
  for (const auto& inst : split.instances) {
    texts.push_back(inst.base.premise);
    texts.push_back(inst.base.hypothesis);
    texts.push_back(inst.gold_explanation);
  }
  Vocabulary vocab = prompt_vocab(texts);
  TinyBackendConfig cfg;
  cfg.max_len = 64;
  TinyGenerator gen(vocab, cfg, 17);

  TrainingConfig tc;
  tc.batch_size = 2;
  tc.learning_rate = 3e-3;
  tc.epochs = 60;
  tc.seed = 17;
  FineTuneReport report = train_generator(gen, split, {}, tc);
  CHECK(report.nll_after < report.nll_before);

  std::string out = generate_explanation(gen, "A man plays a guitar .",
                                         "A man plays an instrument .", {0, 0, 0, 0, 1, 0});
  CHECK(out == "A guitar is an instrument .");
}

TEST_CASE("a triple carries one explanation per label with sentinel fallback") {
  std::vector<std::string> texts = {"A man plays a guitar .", "A man plays an instrument ."};
  Vocabulary vocab = prompt_vocab(texts);
  TinyBackendConfig cfg;
  cfg.max_len = 64;
  TinyEncoder enc(vocab, cfg, 5);
  RationalizerModel rat(enc, 5);
  TinyGenerator gen(vocab, cfg, 6);

  // Teach the generator that every explanation is empty: the continuation
  // after "Explanation:" is immediately end-of-text, whatever the brackets.
  std::vector<std::string> empty_prompts;
  std::size_t words = whitespace_words(texts[1]).size();
  for (std::size_t pattern = 0; pattern <= words; ++pattern) {
    std::vector<int> labels(words, 0);
    if (pattern < words) labels[pattern] = 1;
    empty_prompts.push_back(build_prompt(texts[0], texts[1], labels));
  }
  empty_prompts.push_back(build_prompt(texts[0], texts[1], std::vector<int>(words, 1)));
  TrainingConfig tc;
  tc.batch_size = 4;
  tc.learning_rate = 3e-3;
  tc.epochs = 40;
  tc.seed = 6;
  fine_tune_lm(gen, empty_prompts, tc);

  NLIInstance inst{"t1", texts[0], texts[1], Label::entailment};
  ExplanationTriple triple = generate_triple(gen, rat, inst);
  CHECK(triple.instance_id == "t1");
  for (Label l : kAllLabels) {
    int li = static_cast<int>(l);
    CHECK_FALSE(triple.explanation[li].empty());
    CHECK(triple.rationale[li].size() == 8);  // <s> + 6 tokens + <s>
    if (triple.empty_generation[li]) CHECK(triple.explanation[li] == kEmptyExplanationSentinel);
  }
  // The generator was trained to stop immediately, so at least one label
  // (in practice all three) takes the sentinel path.
  CHECK((triple.empty_generation[0] || triple.empty_generation[1] || triple.empty_generation[2]));
}
