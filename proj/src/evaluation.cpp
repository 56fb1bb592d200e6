#include "lirex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lirex/errors.hpp"
#include "lirex/io_util.hpp"
#include "lirex/rng.hpp"

namespace lirex {

namespace {

bool is_rate_key(const std::string& key) {
  return key.rfind("accuracy", 0) == 0 || key == "precision" || key == "recall" || key == "f1";
}

}  // namespace

void MetricReport::validate() const {
  if (name.empty()) throw ConsistencyError("metric report has no name");
  if (n == 0) throw ConsistencyError("metric report '" + name + "' covers zero instances");
  for (const auto& [key, value] : values) {
    if (!std::isfinite(value))
      throw ConsistencyError("metric report '" + name + "': " + key + " is not finite");
    if (is_rate_key(key) && (value < 0.0 || value > 1.0))
      throw ConsistencyError("metric report '" + name + "': rate " + key + " = " +
                             std::to_string(value) + " is outside [0, 1]");
  }
}

double accuracy(const std::vector<Label>& predicted, const std::vector<Label>& gold) {
  if (predicted.empty()) throw ConfigError("accuracy over an empty prediction list");
  if (predicted.size() != gold.size())
    throw ConfigError("accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                      std::to_string(gold.size()) + " gold labels");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == gold[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

TokenPRF token_prf(const std::vector<RationaleMask>& predicted,
                   const std::vector<RationaleMask>& gold) {
  if (predicted.empty()) throw ConfigError("token metrics over an empty mask list");
  if (predicted.size() != gold.size())
    throw ConfigError("token metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                      std::to_string(gold.size()) + " gold masks");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    predicted[i].validate();
    gold[i].validate();
    if (predicted[i].size() != gold[i].size())
      throw ConsistencyError("token metrics: pair " + std::to_string(i) + " has " +
                             std::to_string(predicted[i].size()) + " predicted vs " +
                             std::to_string(gold[i].size()) + " gold tokens");
    for (std::size_t t = 0; t < gold[i].size(); ++t) {
      const bool p = predicted[i].token_labels[t] == 1;
      const bool g = gold[i].token_labels[t] == 1;
      if (p && g) ++tp;
      if (p && !g) ++fp;
      if (!p && g) ++fn;
    }
  }
  TokenPRF out;
  if (tp + fp > 0) out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (out.precision + out.recall > 0.0)
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

MetricReport faithfulness_probe(NLIClassifier& all_model, NLIClassifier& base_model,
                                NLIClassifier& expl_model, const std::vector<EvalItem>& items) {
  if (items.empty()) throw ConfigError("faithfulness probe over an empty item list");
  std::vector<Label> gold;
  std::vector<Label> via_all, via_base, via_expl;
  gold.reserve(items.size());
  for (const auto& item : items) {
    gold.push_back(item.instance.gold_label);
    InferenceInput input{item.instance.premise, item.instance.hypothesis, item.explanation};
    via_all.push_back(predict_label(all_model, input, InferenceMode::all).argmax());
    via_base.push_back(
        predict_label(base_model, InferenceInput{item.instance.premise, item.instance.hypothesis, ""},
                      InferenceMode::base)
            .argmax());
    via_expl.push_back(
        predict_label(expl_model, InferenceInput{"", "", item.explanation}, InferenceMode::expl)
            .argmax());
  }
  MetricReport report;
  report.name = "faithfulness";
  report.n = items.size();
  const double acc_all = accuracy(via_all, gold);
  const double acc_base = accuracy(via_base, gold);
  const double acc_expl = accuracy(via_expl, gold);
  report.values["accuracy_all"] = acc_all;
  report.values["accuracy_base"] = acc_base;
  report.values["accuracy_expl"] = acc_expl;
  report.values["gain_over_base"] = acc_all - acc_base;
  report.values["gain_over_expl"] = acc_all - acc_expl;
  report.validate();
  return report;
}

MetricReport spurious_probe(NLIClassifier& model, InferenceMode mode,
                            const std::vector<ProbeItem>& items, std::uint64_t seed) {
  if (items.empty()) throw ConfigError("spurious-cue probe over an empty item list");
  if (mode == InferenceMode::base)
    throw ConfigError("spurious-cue probe needs a mode that reads explanations");
  Rng rng(seed);
  std::vector<Label> gold, via_best, via_random;
  for (const auto& item : items) {
    item.triple.validate();
    item.selection.validate();
    gold.push_back(item.instance.gold_label);
    const Label best = select_max(item.selection);
    const Label random_pick = kAllLabels[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(kNumLabels) - 1))];
    const std::string hyp = mode == InferenceMode::expl ? "" : item.instance.hypothesis;
    const std::string prem = mode == InferenceMode::expl ? "" : item.instance.premise;
    via_best.push_back(
        predict_label(model, InferenceInput{prem, hyp, item.triple.for_label(best)}, mode)
            .argmax());
    via_random.push_back(
        predict_label(model, InferenceInput{prem, hyp, item.triple.for_label(random_pick)}, mode)
            .argmax());
  }
  MetricReport report;
  report.name = "spurious_cues";
  report.n = items.size();
  report.seed = seed;
  const double acc_best = accuracy(via_best, gold);
  const double acc_random = accuracy(via_random, gold);
  report.values["accuracy_best"] = acc_best;
  report.values["accuracy_random"] = acc_random;
  report.values["gap"] = acc_best - acc_random;
  report.validate();
  return report;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count,
                                        std::uint64_t seed) {
  if (count > population)
    throw ConfigError("cannot sample " + std::to_string(count) + " of " +
                      std::to_string(population) + " indices");
  std::vector<std::size_t> all(population);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(all);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

// ------------------------------ human review ------------------------------

const std::string& to_string(ReviewQuestion q) {
  static const std::string kRationale = "rationale_contains_key_info";
  static const std::string kExplanation = "explanation_contains_rationale_info";
  return q == ReviewQuestion::rationale_contains_key_info ? kRationale : kExplanation;
}

ReviewQuestion review_question_from_string(const std::string& s) {
  if (s == "rationale_contains_key_info") return ReviewQuestion::rationale_contains_key_info;
  if (s == "explanation_contains_rationale_info")
    return ReviewQuestion::explanation_contains_rationale_info;
  throw FormatError("unknown review question '" + s + "'");
}

namespace {

AgreementReport agreement_over(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty()) throw ConfigError("agreement over empty judgment lists");
  if (a.size() != b.size())
    throw ConfigError("agreement: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + " judgments");
  const double total = static_cast<double>(a.size());
  std::size_t same = 0;
  std::map<int, std::size_t> count_a, count_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++same;
    ++count_a[a[i]];
    ++count_b[b[i]];
  }
  AgreementReport report;
  report.raw = static_cast<double>(same) / total;
  double chance = 0.0;
  for (const auto& [category, na] : count_a) {
    const auto it = count_b.find(category);
    if (it == count_b.end()) continue;
    chance += (static_cast<double>(na) / total) * (static_cast<double>(it->second) / total);
  }
  // Both raters constant on the same category: agreement is total but chance
  // agreement is too, so kappa's usual form divides by zero. Report 1.
  report.kappa = chance >= 1.0 ? 1.0 : (report.raw - chance) / (1.0 - chance);
  return report;
}

}  // namespace

AgreementReport agreement(const std::vector<int>& a, const std::vector<int>& b) {
  return agreement_over(a, b);
}

AgreementReport agreement(const std::vector<AnnotationRecord>& a,
                          const std::vector<AnnotationRecord>& b) {
  std::map<std::string, int> by_id_a, by_id_b;
  for (const auto& r : a) by_id_a[r.instance_id] = r.judgment;
  for (const auto& r : b) by_id_b[r.instance_id] = r.judgment;
  if (by_id_a.size() != a.size() || by_id_b.size() != b.size())
    throw ConsistencyError("agreement: a rater judged some instance twice");
  std::vector<int> flat_a, flat_b;
  for (const auto& [id, judgment] : by_id_a) {
    const auto it = by_id_b.find(id);
    if (it == by_id_b.end())
      throw ConsistencyError("agreement: instance '" + id + "' judged by only one rater");
    flat_a.push_back(judgment);
    flat_b.push_back(it->second);
  }
  if (by_id_b.size() != by_id_a.size())
    throw ConsistencyError("agreement: the raters judged different instance sets");
  return agreement_over(flat_a, flat_b);
}

HumanEvalSession::HumanEvalSession(const std::filesystem::path& file,
                                   const std::vector<HumanEvalSample>& samples,
                                   ReviewQuestion question, std::string annotator_id)
    : samples_(samples), question_(question), annotator_id_(std::move(annotator_id)) {
  if (samples_.empty()) throw ConfigError("review session with no samples");
  if (annotator_id_.empty()) throw ConfigError("review session with no annotator id");
  std::set<std::string> ids;
  for (const auto& s : samples_) {
    if (s.instance_id.empty()) throw ConsistencyError("review sample with an empty instance id");
    if (!ids.insert(s.instance_id).second)
      throw ConsistencyError("duplicate review sample id '" + s.instance_id + "'");
  }
  if (std::filesystem::exists(file)) {
    for (const auto& line : read_lines(file)) {
      if (line.empty()) continue;
      nlohmann::json row;
      try {
        row = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("unreadable judgment in " + file.string() + ": " + e.what());
      }
      AnnotationRecord record;
      try {
        record.instance_id = row.at("instance_id").get<std::string>();
        record.annotator_id = row.at("annotator_id").get<std::string>();
        record.question = review_question_from_string(row.at("question").get<std::string>());
        record.judgment = row.at("judgment").get<int>();
        record.timestamp = row.value("timestamp", std::string{});
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("incomplete judgment in " + file.string() + ": " + e.what());
      }
      if (record.judgment != 0 && record.judgment != 1)
        throw FormatError("judgment for '" + record.instance_id + "' is not 0 or 1");
      if (record.annotator_id != annotator_id_)
        throw FormatError("session file " + file.string() + " belongs to annotator '" +
                          record.annotator_id + "', not '" + annotator_id_ + "'");
      if (record.question != question_)
        throw FormatError("session file " + file.string() + " answers a different question");
      if (ids.find(record.instance_id) == ids.end())
        throw FormatError("session file " + file.string() + " judges unknown instance '" +
                          record.instance_id + "'");
      if (!judged_.insert(record.instance_id).second)
        throw FormatError("session file " + file.string() + " judges '" + record.instance_id +
                          "' twice");
      records_.push_back(std::move(record));
    }
  } else if (file.has_parent_path()) {
    std::filesystem::create_directories(file.parent_path());
  }
  out_.open(file, std::ios::app);
  if (!out_) throw IoError("cannot open review session file " + file.string());
}

std::optional<HumanEvalSample> HumanEvalSession::next_unjudged() const {
  for (const auto& s : samples_)
    if (judged_.find(s.instance_id) == judged_.end()) return s;
  return std::nullopt;
}

void HumanEvalSession::record(const std::string& instance_id, int judgment) {
  if (judgment != 0 && judgment != 1)
    throw ConsistencyError("judgment for '" + instance_id + "' must be 0 or 1");
  const bool known = std::any_of(samples_.begin(), samples_.end(),
                                 [&](const HumanEvalSample& s) { return s.instance_id == instance_id; });
  if (!known) throw ConsistencyError("judgment for unknown instance '" + instance_id + "'");
  if (judged_.find(instance_id) != judged_.end())
    throw ConsistencyError("instance '" + instance_id + "' was already judged");
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  nlohmann::json row;
  row["instance_id"] = instance_id;
  row["annotator_id"] = annotator_id_;
  row["question"] = to_string(question_);
  row["judgment"] = judgment;
  row["timestamp"] = stamp;
  out_ << row.dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("failed to persist the judgment for '" + instance_id + "'");
  records_.push_back(AnnotationRecord{instance_id, annotator_id_, question_, judgment, stamp});
  judged_.insert(instance_id);
}

}  // namespace lirex
