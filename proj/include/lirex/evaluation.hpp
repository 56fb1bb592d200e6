#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lirex/inference.hpp"
#include "lirex/selector.hpp"
#include "lirex/types.hpp"

namespace lirex {

// Named bundle of metric values over n instances. Keys beginning with
// "accuracy", plus precision/recall/f1, are rates and must lie in [0, 1].
struct MetricReport {
  std::string name;
  std::map<std::string, double> values;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  void validate() const;  // ConsistencyError on n == 0 or an out-of-range rate
};

// Fraction of positions where the two label sequences agree.
// ConfigError on empty or mismatched inputs.
double accuracy(const std::vector<Label>& predicted, const std::vector<Label>& gold);

// Micro-averaged token precision/recall/F1 for binary rationale masks:
// counts are pooled over every (predicted, gold) pair before dividing.
// A zero denominator yields 0 for that metric.
struct TokenPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
TokenPRF token_prf(const std::vector<RationaleMask>& predicted,
                   const std::vector<RationaleMask>& gold);

// One evaluation row: an instance and the explanation chosen for it.
struct EvalItem {
  NLIInstance instance;
  std::string explanation;
};

// Compares classifiers that read the pair plus the explanation (all), the
// pair alone (base), and the explanation alone (expl) over the same items.
// values: accuracy_all, accuracy_base, accuracy_expl, gain_over_base
// (= all - base), gain_over_expl (= all - expl).
MetricReport faithfulness_probe(NLIClassifier& all_model, NLIClassifier& base_model,
                                NLIClassifier& expl_model, const std::vector<EvalItem>& items);

// One probe row: an instance with its full candidate set and scores.
struct ProbeItem {
  NLIInstance instance;
  ExplanationTriple triple;
  LabelDistribution selection;
};

// Accuracy with the top-scored candidate versus a uniformly random
// candidate per item. values: accuracy_best, accuracy_random, gap
// (= best - random). A gap near zero means the candidate choice does not
// matter to the classifier.
MetricReport spurious_probe(NLIClassifier& model, InferenceMode mode,
                            const std::vector<ProbeItem>& items, std::uint64_t seed);

// Deterministic choice of `count` distinct indices out of `population`.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count,
                                        std::uint64_t seed);

// ------------------------------ human review ------------------------------

// The yes/no question a reviewing session asks about every sample.
enum class ReviewQuestion { rationale_contains_key_info, explanation_contains_rationale_info };

const std::string& to_string(ReviewQuestion q);
ReviewQuestion review_question_from_string(const std::string& s);  // FormatError on unknown text

// What a reviewer sees for one judgment.
struct HumanEvalSample {
  std::string instance_id;
  std::string premise;
  std::string hypothesis;
  std::string predicted_label;
  std::string rationale_text;  // the highlighted hypothesis rendering
  std::string explanation;
};

// One persisted binary judgment.
struct AnnotationRecord {
  std::string instance_id;
  std::string annotator_id;
  ReviewQuestion question = ReviewQuestion::rationale_contains_key_info;
  int judgment = 0;        // 1 = yes, 0 = no
  std::string timestamp;   // UTC, ISO 8601, set when the judgment is recorded
};

// Raw inter-rater agreement and Cohen's kappa over paired judgments. Two
// raters in complete, constant agreement get kappa 1. The record overload
// aligns by instance id and requires identical id sets.
struct AgreementReport {
  double raw = 0.0;
  double kappa = 0.0;
};
AgreementReport agreement(const std::vector<int>& a, const std::vector<int>& b);
AgreementReport agreement(const std::vector<AnnotationRecord>& a,
                          const std::vector<AnnotationRecord>& b);

// A reviewing session persisted as one JSON record per line. Every record
// is appended and flushed immediately, so an interrupted session loses at
// most the judgment in flight; reopening the same file resumes where the
// reviewer stopped. Sample ids must be unique; judging an unknown or
// already-judged id, or resuming with a different annotator or question,
// is an error.
class HumanEvalSession {
 public:
  HumanEvalSession(const std::filesystem::path& file, const std::vector<HumanEvalSample>& samples,
                   ReviewQuestion question, std::string annotator_id);

  // The first sample (in construction order) without a judgment.
  std::optional<HumanEvalSample> next_unjudged() const;

  void record(const std::string& instance_id, int judgment);  // judgment must be 0 or 1

  std::size_t judged_count() const { return records_.size(); }
  std::size_t total_count() const { return samples_.size(); }
  bool complete() const { return judged_count() == total_count(); }
  const std::vector<AnnotationRecord>& records() const { return records_; }
  ReviewQuestion question() const { return question_; }
  const std::string& annotator_id() const { return annotator_id_; }

 private:
  std::vector<HumanEvalSample> samples_;
  std::vector<AnnotationRecord> records_;
  std::set<std::string> judged_;
  ReviewQuestion question_;
  std::string annotator_id_;
  std::ofstream out_;
};

}  // namespace lirex
