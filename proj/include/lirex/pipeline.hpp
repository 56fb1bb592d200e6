#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lirex/backends.hpp"
#include "lirex/corpus.hpp"
#include "lirex/evaluation.hpp"
#include "lirex/inference.hpp"

namespace lirex {

// The staged workflow, in canonical execution order.
enum class Stage {
  prepare,
  train_rationalizer,
  train_generator,
  generate,
  train_selector,
  select,
  train_inference,
  evaluate,
  probe,
  human_eval,
};

inline constexpr std::array<Stage, 10> kAllStages = {
    Stage::prepare,      Stage::train_rationalizer, Stage::train_generator, Stage::generate,
    Stage::train_selector, Stage::select,           Stage::train_inference, Stage::evaluate,
    Stage::probe,        Stage::human_eval,
};

const std::string& to_string(Stage stage);
Stage stage_from_string(const std::string& s);  // FormatError on unknown text

// Root directory for run artifacts: the LIREX_CACHE environment variable
// when set, otherwise the current directory.
std::filesystem::path cache_root();

// Everything a run needs: data sources, backend geometry, per-stage
// training settings, and the global seed. Loaded from a single editable
// JSON file; every CLI flag overrides its counterpart here.
struct PipelineConfig {
  std::string backend = "tiny";  // "tiny" or "pretrained"
  std::string encoder_id;        // pretrained only, e.g. "roberta-base"
  std::string generator_id;      // pretrained only, e.g. "gpt2-medium"
  TinyBackendConfig tiny;

  std::filesystem::path cache_dir = "lirex_run";  // relative paths root at cache_root()
  std::filesystem::path checkpoint_dir;           // empty: <work_dir>/checkpoints
  std::filesystem::path train_file;               // empty: synthetic corpus
  std::filesystem::path dev_file;                 // empty: synthetic corpus
  std::size_t synthetic_train = 200;
  std::size_t synthetic_dev = 60;

  std::uint64_t seed = 7;
  InferenceMode inference_mode = InferenceMode::all;
  SelectionStrategy selection_strategy = SelectionStrategy::max;
  std::size_t human_eval_samples = 10;
  std::string annotator_id = "annotator-1";
  ReviewQuestion review_question = ReviewQuestion::rationale_contains_key_info;

  TrainingConfig rationalizer_training;
  TrainingConfig generator_training;
  TrainingConfig selector_training;
  TrainingConfig inference_training;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& file);
  nlohmann::json to_json() const;

  std::filesystem::path work_dir() const;     // resolved cache_dir
  std::filesystem::path checkpoints() const;  // resolved checkpoint_dir

  // Structural checks: known backend, positive geometry, per-stage training
  // settings valid, referenced corpus files present. With dry_run false the
  // config must also be executable in this build, which excludes the
  // pretrained placeholders.
  void validate(bool dry_run) const;
};

// Per-stage completion record: what was written, its digests, and how long
// the stage took. A stage marked complete always lists its artifacts.
struct StageRecord {
  bool complete = false;
  std::map<std::string, std::string> digests;  // work_dir-relative path -> hex digest
  std::int64_t wall_ms = 0;
};

// On-disk ledger of a run: the exact config it was produced under and one
// record per finished stage. A manifest whose config digest no longer
// matches the active config is discarded, so stale artifacts are never
// silently reused across config edits.
struct RunManifest {
  int format_version = 1;
  std::string config_digest;
  nlohmann::json config_snapshot;
  std::map<std::string, StageRecord> stages;

  static RunManifest load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;  // atomic
};

// Templated three-way corpus whose rationale word determines the label:
// entailment drops the premise's color word and highlights the kept
// subject/verb, neutral introduces an unseen object and highlights it,
// contradiction swaps the color and highlights the swap. Labels are
// balanced within one instance, roughly one in twenty explanations merely
// restates its hypothesis (exercising the non-informative filter), and the
// same seed always produces the same instances. ConfigError when n < 30.
CorpusSplit make_synthetic_corpus(std::uint64_t seed, std::size_t n, const std::string& split_name);

// Orchestrates the staged run inside one working directory. Stages write
// their artifacts atomically, record digests in the manifest, and are
// skipped when already complete with intact artifacts (unless forced).
// Running a stage whose upstream work is missing fails with an error that
// names the stage to run first.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& work_dir() const { return work_dir_; }
  const RunManifest& manifest() const { return manifest_; }

  // True when the stage is flagged complete and every recorded artifact
  // still hashes to its manifest digest.
  bool stage_done(Stage stage) const;

  // Runs one stage. Returns true when work was performed, false when the
  // stage was skipped as already complete. The human_eval stage only
  // completes once every sampled instance has a persisted judgment; until
  // then it prepares the sample queue and returns with the flag unset.
  bool run_stage(Stage stage, bool force = false);

  // Runs prepare through `last` in canonical order (skipping the
  // interactive human_eval stage unless it is `last` itself).
  void run_through(Stage last, bool force = false);

  // Interactive judgment loop over the prepared human-eval samples: prints
  // each sample and the session question to `out`, reads y/n answers from
  // `in`, persists every judgment immediately, and finalizes the stage when
  // the last sample is judged. Stops early on end-of-input or "q".
  void review(std::istream& in, std::ostream& out);

 private:
  std::vector<std::filesystem::path> dispatch(Stage stage, bool force);

  std::vector<std::filesystem::path> do_prepare();
  std::vector<std::filesystem::path> do_train_rationalizer();
  std::vector<std::filesystem::path> do_train_generator();
  std::vector<std::filesystem::path> do_generate(bool force);
  std::vector<std::filesystem::path> do_train_selector();
  std::vector<std::filesystem::path> do_select();
  std::vector<std::filesystem::path> do_train_inference();
  std::vector<std::filesystem::path> do_evaluate();
  std::vector<std::filesystem::path> do_probe();
  std::vector<std::filesystem::path> do_human_eval();

  void save_manifest() const;

  PipelineConfig config_;
  std::filesystem::path work_dir_;
  RunManifest manifest_;
};

}  // namespace lirex
