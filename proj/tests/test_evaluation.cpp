#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "lirex/backends.hpp"
#include "lirex/evaluation.hpp"
#include "lirex/io_util.hpp"
#include "lirex/rng.hpp"

using namespace lirex;
namespace fs = std::filesystem;

namespace {

Vocabulary tiny_vocab(const std::vector<std::string>& texts) {
  std::vector<std::string> extra;
  for (Label l : kAllLabels) extra.push_back(to_string(l));
  return Vocabulary::build_from_texts(texts, extra);
}

TinyBackendConfig small_cfg() {
  TinyBackendConfig cfg;
  cfg.hidden_dim = 16;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.ffn_dim = 32;
  cfg.max_len = 48;
  return cfg;
}

RationaleMask random_mask(std::size_t len, Rng& rng) {
  RationaleMask m;
  for (std::size_t i = 0; i < len; ++i) {
    int label = static_cast<int>(rng.uniform_int(0, 1));
    m.token_labels.push_back(label);
    m.token_probs.push_back(label ? 0.9 : 0.1);
  }
  return m;
}

fs::path temp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "lirex_eval_test";
  fs::create_directories(dir);
  fs::path p = dir / name;
  fs::remove(p);
  return p;
}

HumanEvalSample sample_with_id(const std::string& id) {
  return {id, "a premise .", "a hypothesis .", "entailment", "a [hypothesis] .",
          "an explanation ."};
}

}  // namespace

TEST_CASE("accuracy counts exact label matches") {
  std::vector<Label> gold = {Label::entailment, Label::neutral, Label::contradiction,
                             Label::entailment};
  std::vector<Label> pred = {Label::entailment, Label::contradiction, Label::contradiction,
                             Label::neutral};
  CHECK(accuracy(pred, gold) == 0.5);
  CHECK(accuracy(gold, gold) == 1.0);
  CHECK_THROWS_AS(accuracy({}, {}), ConfigError);
  CHECK_THROWS_AS(accuracy(pred, {Label::entailment}), ConfigError);
}

TEST_CASE("accuracy is invariant under a shared permutation of the pairs") {
  Rng rng(17);
  std::vector<Label> gold, pred;
  for (int i = 0; i < 200; ++i) {
    gold.push_back(static_cast<Label>(rng.uniform_int(0, 2)));
    pred.push_back(static_cast<Label>(rng.uniform_int(0, 2)));
  }
  const double before = accuracy(pred, gold);
  std::vector<std::size_t> order(gold.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<Label> gold_p, pred_p;
  for (std::size_t i : order) {
    gold_p.push_back(gold[i]);
    pred_p.push_back(pred[i]);
  }
  CHECK(accuracy(pred_p, gold_p) == before);
}

TEST_CASE("metric report rejects zero coverage and out-of-range rates") {
  MetricReport ok;
  ok.name = "demo";
  ok.n = 3;
  ok.values["accuracy"] = 0.5;
  ok.values["gain_over_base"] = -0.25;  // deltas may be negative
  CHECK_NOTHROW(ok.validate());

  MetricReport empty = ok;
  empty.n = 0;
  CHECK_THROWS_AS(empty.validate(), ConsistencyError);

  MetricReport bad_rate = ok;
  bad_rate.values["accuracy_best"] = 1.5;
  CHECK_THROWS_AS(bad_rate.validate(), ConsistencyError);

  MetricReport nameless = ok;
  nameless.name.clear();
  CHECK_THROWS_AS(nameless.validate(), ConsistencyError);
}

TEST_CASE("token metrics pool counts across all mask pairs") {
  RationaleMask p1, g1, p2, g2;
  p1.token_labels = {1, 1, 0, 0};
  p1.token_probs = {0.9, 0.9, 0.1, 0.1};
  g1.token_labels = {1, 0, 1, 0};
  g1.token_probs = {1.0, 0.0, 1.0, 0.0};
  p2.token_labels = {1, 0};
  p2.token_probs = {0.8, 0.2};
  g2.token_labels = {1, 1};
  g2.token_probs = {1.0, 1.0};
  // Pooled: tp=2 (p1[0], p2[0]), fp=1 (p1[1]), fn=2 (g1[2], g2[1]).
  TokenPRF prf = token_prf({p1, p2}, {g1, g2});
  CHECK(prf.precision == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(prf.recall == doctest::Approx(2.0 / 4).epsilon(1e-12));
  CHECK(prf.f1 == doctest::Approx(2 * (2.0 / 3) * 0.5 / (2.0 / 3 + 0.5)).epsilon(1e-12));
}

TEST_CASE("token metrics return zero on empty denominators") {
  RationaleMask none, gold_none, gold_some;
  none.token_labels = {0, 0};
  none.token_probs = {0.0, 0.0};
  gold_none = none;
  gold_some.token_labels = {1, 0};
  gold_some.token_probs = {1.0, 0.0};

  TokenPRF all_zero = token_prf({none}, {gold_none});
  CHECK(all_zero.precision == 0.0);
  CHECK(all_zero.recall == 0.0);
  CHECK(all_zero.f1 == 0.0);

  TokenPRF no_pred = token_prf({none}, {gold_some});
  CHECK(no_pred.precision == 0.0);  // no predictions at all
  CHECK(no_pred.recall == 0.0);
  CHECK(no_pred.f1 == 0.0);
}

TEST_CASE("token metrics agree with a pooled-confusion oracle on random pairs") {
  Rng rng(41);
  std::vector<RationaleMask> pred, gold;
  long tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < 1000; ++i) {
    std::size_t len = 1 + rng.uniform_int(0, 11);
    pred.push_back(random_mask(len, rng));
    gold.push_back(random_mask(len, rng));
    for (std::size_t t = 0; t < len; ++t) {
      int p = pred.back().token_labels[t], g = gold.back().token_labels[t];
      if (p && g) ++tp;
      if (p && !g) ++fp;
      if (!p && g) ++fn;
    }
  }
  TokenPRF prf = token_prf(pred, gold);
  double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  CHECK(prf.precision == doctest::Approx(precision).epsilon(1e-12));
  CHECK(prf.recall == doctest::Approx(recall).epsilon(1e-12));
  CHECK(prf.f1 ==
        doctest::Approx(precision + recall > 0 ? 2 * precision * recall / (precision + recall)
                                               : 0.0)
            .epsilon(1e-12));

  // F1 sits between precision and recall, and vanishes exactly when tp does.
  CHECK(prf.f1 >= std::min(prf.precision, prf.recall) - 1e-12);
  CHECK(prf.f1 <= std::max(prf.precision, prf.recall) + 1e-12);
  CHECK((prf.f1 == 0.0) == (tp == 0));
}

TEST_CASE("token metrics are invariant under a shared permutation of the pairs") {
  Rng rng(43);
  std::vector<RationaleMask> pred, gold;
  for (int i = 0; i < 50; ++i) {
    std::size_t len = 1 + rng.uniform_int(0, 7);
    pred.push_back(random_mask(len, rng));
    gold.push_back(random_mask(len, rng));
  }
  TokenPRF before = token_prf(pred, gold);
  std::vector<std::size_t> order(pred.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<RationaleMask> pred_p, gold_p;
  for (std::size_t i : order) {
    pred_p.push_back(pred[i]);
    gold_p.push_back(gold[i]);
  }
  TokenPRF after = token_prf(pred_p, gold_p);
  CHECK(after.precision == before.precision);
  CHECK(after.recall == before.recall);
  CHECK(after.f1 == before.f1);
}

TEST_CASE("rater agreement separates raw overlap from chance-corrected kappa") {
  AgreementReport half = agreement(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0});
  CHECK(half.raw == 0.5);
  CHECK(half.kappa == doctest::Approx(0.0).epsilon(1e-12));

  AgreementReport perfect = agreement(std::vector<int>{1, 1, 1}, std::vector<int>{1, 1, 1});
  CHECK(perfect.raw == 1.0);
  CHECK(perfect.kappa == 1.0);  // constant identical raters

  AgreementReport mixed_perfect =
      agreement(std::vector<int>{0, 1, 2, 0}, std::vector<int>{0, 1, 2, 0});
  CHECK(mixed_perfect.raw == 1.0);
  CHECK(mixed_perfect.kappa == 1.0);

  // Hand-computed: a = 1,1,0,0,1  b = 1,0,0,0,1 -> raw 0.8,
  // pa(1)=0.6 pa(0)=0.4, pb(1)=0.4 pb(0)=0.6 -> pe=0.48, kappa=0.61538...
  AgreementReport hand =
      agreement(std::vector<int>{1, 1, 0, 0, 1}, std::vector<int>{1, 0, 0, 0, 1});
  CHECK(hand.raw == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(hand.kappa == doctest::Approx((0.8 - 0.48) / (1.0 - 0.48)).epsilon(1e-12));

  CHECK_THROWS_AS(agreement(std::vector<int>{}, std::vector<int>{}), ConfigError);
  CHECK_THROWS_AS(agreement(std::vector<int>{1}, std::vector<int>{1, 0}), ConfigError);
}

TEST_CASE("record agreement aligns raters by instance id") {
  auto rec = [](const std::string& id, const std::string& who, int j) {
    return AnnotationRecord{id, who, ReviewQuestion::rationale_contains_key_info, j, ""};
  };
  // Rater b saw the instances in a different order; alignment is by id.
  std::vector<AnnotationRecord> a = {rec("i1", "a", 1), rec("i2", "a", 1), rec("i3", "a", 0),
                                     rec("i4", "a", 0)};
  std::vector<AnnotationRecord> b = {rec("i4", "b", 0), rec("i2", "b", 0), rec("i1", "b", 1),
                                     rec("i3", "b", 1)};
  AgreementReport report = agreement(a, b);
  CHECK(report.raw == 0.5);  // i1 and i4 agree, i2 and i3 do not
  CHECK(report.kappa == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<AnnotationRecord> missing = {rec("i1", "b", 1)};
  CHECK_THROWS_AS(agreement(a, missing), ConsistencyError);
  std::vector<AnnotationRecord> doubled = {rec("i1", "b", 1), rec("i1", "b", 0)};
  CHECK_THROWS_AS(agreement(doubled, doubled), ConsistencyError);
}

TEST_CASE("review question names round-trip") {
  for (ReviewQuestion q : {ReviewQuestion::rationale_contains_key_info,
                           ReviewQuestion::explanation_contains_rationale_info})
    CHECK(review_question_from_string(to_string(q)) == q);
  CHECK_THROWS_AS(review_question_from_string("is_it_good"), FormatError);
}

TEST_CASE("index sampling is deterministic, distinct, and bounded") {
  std::vector<std::size_t> a = sample_indices(100, 10, 7);
  std::vector<std::size_t> b = sample_indices(100, 10, 7);
  CHECK(a == b);
  CHECK(a.size() == 10);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i] > a[i - 1]);  // sorted + distinct
  for (std::size_t v : a) CHECK(v < 100);
  CHECK(sample_indices(5, 5, 3).size() == 5);
  CHECK_THROWS_AS(sample_indices(3, 4, 1), ConfigError);
  std::vector<std::size_t> c = sample_indices(100, 10, 8);
  CHECK(a != c);  // different seed moves the sample
}

TEST_CASE("faithfulness probe reports per-reader accuracies over the same items") {
  std::vector<std::string> texts = {"the dog is here .", "a dog exists .", "a cat exists .",
                                    "yes the dog matters .", "no the cat matters ."};
  Vocabulary vocab = tiny_vocab(texts);
  TinyEncoder enc_all(vocab, small_cfg(), 3);
  TinyEncoder enc_base(vocab, small_cfg(), 4);
  TinyEncoder enc_expl(vocab, small_cfg(), 5);
  NLIClassifier model_all(enc_all, "inference", 3);
  NLIClassifier model_base(enc_base, "inference", 4);
  NLIClassifier model_expl(enc_expl, "inference", 5);

  std::vector<EvalItem> items;
  items.push_back({NLIInstance{"f1", texts[0], texts[1], Label::entailment}, texts[3]});
  items.push_back({NLIInstance{"f2", texts[0], texts[2], Label::neutral}, texts[4]});

  MetricReport report = faithfulness_probe(model_all, model_base, model_expl, items);
  CHECK(report.name == "faithfulness");
  CHECK(report.n == items.size());

  // Oracle: recompute each accuracy directly through the prediction API.
  std::vector<Label> gold, all_pred, base_pred, expl_pred;
  for (const EvalItem& item : items) {
    gold.push_back(item.instance.gold_label);
    all_pred.push_back(predict_label(model_all,
                                     {item.instance.premise, item.instance.hypothesis,
                                      item.explanation},
                                     InferenceMode::all)
                           .argmax());
    base_pred.push_back(predict_label(model_base,
                                      {item.instance.premise, item.instance.hypothesis, ""},
                                      InferenceMode::base)
                            .argmax());
    expl_pred.push_back(
        predict_label(model_expl, {"", "", item.explanation}, InferenceMode::expl).argmax());
  }
  CHECK(report.values.at("accuracy_all") == accuracy(all_pred, gold));
  CHECK(report.values.at("accuracy_base") == accuracy(base_pred, gold));
  CHECK(report.values.at("accuracy_expl") == accuracy(expl_pred, gold));
  CHECK(report.values.at("gain_over_base") ==
        doctest::Approx(report.values.at("accuracy_all") - report.values.at("accuracy_base"))
            .epsilon(1e-12));
  CHECK(report.values.at("gain_over_expl") ==
        doctest::Approx(report.values.at("accuracy_all") - report.values.at("accuracy_expl"))
            .epsilon(1e-12));
}

TEST_CASE("identical candidates make best and random choices coincide exactly") {
  std::vector<std::string> texts = {"the dog is here .", "a dog exists .",
                                    "the same words every time ."};
  Vocabulary vocab = tiny_vocab(texts);
  TinyEncoder enc(vocab, small_cfg(), 9);
  NLIClassifier model(enc, "inference", 9);

  std::vector<ProbeItem> items;
  for (int i = 0; i < 6; ++i) {
    ProbeItem item;
    item.instance = NLIInstance{"s" + std::to_string(i), texts[0], texts[1],
                                static_cast<Label>(i % kNumLabels)};
    item.triple.instance_id = item.instance.instance_id;
    for (int l = 0; l < kNumLabels; ++l) item.triple.explanation[l] = texts[2];
    item.selection.probs = {0.2, 0.5, 0.3};
    items.push_back(item);
  }
  MetricReport report = spurious_probe(model, InferenceMode::all, items, 123);
  CHECK(report.name == "spurious_cues");
  CHECK(report.seed == 123);
  CHECK(report.values.at("accuracy_best") == report.values.at("accuracy_random"));
  CHECK(report.values.at("gap") == 0.0);

  // Same seed, same numbers.
  MetricReport again = spurious_probe(model, InferenceMode::all, items, 123);
  CHECK(again.values.at("accuracy_best") == report.values.at("accuracy_best"));
  CHECK(again.values.at("accuracy_random") == report.values.at("accuracy_random"));

  CHECK_THROWS_AS(spurious_probe(model, InferenceMode::base, items, 1), ConfigError);
}

TEST_CASE("review session persists judgments as flushed lines in the underlying file") {
  fs::path file = temp_file("session.jsonl");
  std::vector<HumanEvalSample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(sample_with_id("q" + std::to_string(i)));

  HumanEvalSession session(file, samples, ReviewQuestion::rationale_contains_key_info, "rater-a");
  CHECK(session.total_count() == 4);
  CHECK(session.judged_count() == 0);
  REQUIRE(session.next_unjudged().has_value());
  CHECK(session.next_unjudged()->instance_id == "q0");

  session.record("q0", 1);
  session.record("q1", 0);
  CHECK(session.judged_count() == 2);
  CHECK(session.next_unjudged()->instance_id == "q2");
  CHECK_FALSE(session.complete());

  // Each judgment is already on disk, stamped with its recording time.
  const std::vector<std::string> lines = read_lines(file);
  CHECK(lines.size() == 2);
  const nlohmann::json first_row = nlohmann::json::parse(lines[0]);
  CHECK(first_row.at("timestamp").get<std::string>().size() == 20);  // YYYY-MM-DDThh:mm:ssZ
  CHECK(session.records().at(0).timestamp == first_row.at("timestamp").get<std::string>());

  CHECK_THROWS_AS(session.record("q0", 1), ConsistencyError);       // already judged
  CHECK_THROWS_AS(session.record("missing", 1), ConsistencyError);  // unknown id
  CHECK_THROWS_AS(session.record("q2", 7), ConsistencyError);       // not a yes/no judgment
}

TEST_CASE("reopening a session resumes after the last persisted judgment") {
  fs::path file = temp_file("resume.jsonl");
  std::vector<HumanEvalSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(sample_with_id("r" + std::to_string(i)));
  const ReviewQuestion q = ReviewQuestion::explanation_contains_rationale_info;

  {
    HumanEvalSession first(file, samples, q, "rater-a");
    first.record("r0", 1);
  }  // session object gone; file remains

  HumanEvalSession resumed(file, samples, q, "rater-a");
  CHECK(resumed.judged_count() == 1);
  CHECK(resumed.records()[0].instance_id == "r0");
  CHECK(resumed.records()[0].annotator_id == "rater-a");
  CHECK(resumed.records()[0].question == q);
  CHECK(resumed.records()[0].judgment == 1);
  REQUIRE(resumed.next_unjudged().has_value());
  CHECK(resumed.next_unjudged()->instance_id == "r1");

  resumed.record("r1", 0);
  resumed.record("r2", 1);
  CHECK(resumed.complete());
  CHECK_FALSE(resumed.next_unjudged().has_value());
  CHECK(read_lines(file).size() == 3);

  // A different annotator, question, or sample set is not this session's file.
  CHECK_THROWS_AS(HumanEvalSession(file, samples, q, "rater-b"), FormatError);
  CHECK_THROWS_AS(HumanEvalSession(
                      file, samples, ReviewQuestion::rationale_contains_key_info, "rater-a"),
                  FormatError);
  std::vector<HumanEvalSample> other = {sample_with_id("z9")};
  CHECK_THROWS_AS(HumanEvalSession(file, other, q, "rater-a"), FormatError);
}
