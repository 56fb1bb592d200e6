#include "lirex/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <utility>

#include "lirex/errors.hpp"
#include "lirex/explainer.hpp"
#include "lirex/io_util.hpp"
#include "lirex/rationalizer.hpp"
#include "lirex/rng.hpp"
#include "lirex/text.hpp"

namespace lirex {

namespace fs = std::filesystem;

// ------------------------------ stage names ------------------------------

namespace {

const std::array<std::string, 10> kStageNames = {
    "prepare",  "train_rationalizer", "train_generator", "generate", "train_selector",
    "select",   "train_inference",    "evaluate",        "probe",    "human_eval",
};

// Upstream stages that must be complete before a stage may run.
const std::vector<Stage>& stage_deps(Stage stage) {
  static const std::map<Stage, std::vector<Stage>> deps = {
      {Stage::prepare, {}},
      {Stage::train_rationalizer, {Stage::prepare}},
      {Stage::train_generator, {Stage::prepare}},
      {Stage::generate, {Stage::train_rationalizer, Stage::train_generator}},
      {Stage::train_selector, {Stage::prepare}},
      {Stage::select, {Stage::train_selector, Stage::generate}},
      {Stage::train_inference, {Stage::select}},
      {Stage::evaluate, {Stage::train_inference}},
      {Stage::probe, {Stage::select}},
      {Stage::human_eval, {Stage::select}},
  };
  return deps.at(stage);
}

std::uint64_t derived_seed(std::uint64_t global, const std::string& tag) {
  return Rng::splitmix(global ^ fnv1a(tag));
}

}  // namespace

const std::string& to_string(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

Stage stage_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == s) return kAllStages[i];
  throw FormatError("unknown stage '" + s + "'");
}

std::filesystem::path cache_root() {
  const char* env = std::getenv("LIREX_CACHE");
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::current_path();
}

// ------------------------------ configuration ------------------------------

namespace {

nlohmann::json tiny_to_json(const TinyBackendConfig& t) {
  return {{"hidden_dim", t.hidden_dim}, {"heads", t.heads},     {"layers", t.layers},
          {"ffn_dim", t.ffn_dim},       {"max_len", t.max_len}, {"max_new_tokens", t.max_new_tokens}};
}

TinyBackendConfig tiny_from_json(const nlohmann::json& j, TinyBackendConfig t) {
  t.hidden_dim = j.value("hidden_dim", t.hidden_dim);
  t.heads = j.value("heads", t.heads);
  t.layers = j.value("layers", t.layers);
  t.ffn_dim = j.value("ffn_dim", t.ffn_dim);
  t.max_len = j.value("max_len", t.max_len);
  t.max_new_tokens = j.value("max_new_tokens", t.max_new_tokens);
  return t;
}

nlohmann::json training_to_json(const TrainingConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"seed", c.seed}};
}

TrainingConfig training_from_json(const nlohmann::json& j, TrainingConfig c,
                                  std::uint64_t fallback_seed) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : fallback_seed;
  return c;
}

LabelDistribution one_hot(Label l) {
  LabelDistribution d;
  d.probs = {0.0, 0.0, 0.0};
  d.probs[static_cast<int>(l)] = 1.0;
  return d;
}

nlohmann::json metric_to_json(const MetricReport& r) {
  return {{"name", r.name}, {"n", r.n}, {"seed", r.seed}, {"values", r.values}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.backend = j.value("backend", c.backend);
  c.encoder_id = j.value("encoder_id", c.encoder_id);
  c.generator_id = j.value("generator_id", c.generator_id);
  if (j.contains("tiny")) c.tiny = tiny_from_json(j.at("tiny"), c.tiny);
  c.cache_dir = fs::path(j.value("cache_dir", c.cache_dir.generic_string()));
  c.checkpoint_dir = fs::path(j.value("checkpoint_dir", std::string{}));
  c.train_file = fs::path(j.value("train_file", std::string{}));
  c.dev_file = fs::path(j.value("dev_file", std::string{}));
  c.synthetic_train = j.value("synthetic_train", c.synthetic_train);
  c.synthetic_dev = j.value("synthetic_dev", c.synthetic_dev);
  c.seed = j.value("seed", c.seed);
  c.inference_mode = inference_mode_from_string(j.value("inference_mode", std::string{"all"}));
  c.selection_strategy =
      selection_strategy_from_string(j.value("selection_strategy", std::string{"max"}));
  c.human_eval_samples = j.value("human_eval_samples", c.human_eval_samples);
  c.annotator_id = j.value("annotator_id", c.annotator_id);
  c.review_question = review_question_from_string(
      j.value("review_question", std::string{"rationale_contains_key_info"}));

  // Per-stage defaults are toy-scale; file entries override, and unlisted
  // stage seeds derive from the global seed so one knob reseeds the run.
  c.rationalizer_training = TrainingConfig{8, 3e-3, 20, 0};
  c.generator_training = TrainingConfig{4, 3e-3, 12, 0};
  c.selector_training = TrainingConfig{8, 3e-3, 15, 0};
  c.inference_training = TrainingConfig{8, 3e-3, 15, 0};
  const nlohmann::json empty = nlohmann::json::object();
  const nlohmann::json& tr = j.contains("training") ? j.at("training") : empty;
  c.rationalizer_training =
      training_from_json(tr.contains("rationalizer") ? tr.at("rationalizer") : empty,
                         c.rationalizer_training, derived_seed(c.seed, "rationalizer"));
  c.generator_training = training_from_json(tr.contains("generator") ? tr.at("generator") : empty,
                                            c.generator_training, derived_seed(c.seed, "generator"));
  c.selector_training = training_from_json(tr.contains("selector") ? tr.at("selector") : empty,
                                           c.selector_training, derived_seed(c.seed, "selector"));
  c.inference_training = training_from_json(tr.contains("inference") ? tr.at("inference") : empty,
                                            c.inference_training, derived_seed(c.seed, "inference"));
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
  }
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + file.string() + " has a bad field: " + e.what());
  }
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["backend"] = backend;
  j["encoder_id"] = encoder_id;
  j["generator_id"] = generator_id;
  j["tiny"] = tiny_to_json(tiny);
  j["cache_dir"] = cache_dir.generic_string();
  j["checkpoint_dir"] = checkpoint_dir.generic_string();
  j["train_file"] = train_file.generic_string();
  j["dev_file"] = dev_file.generic_string();
  j["synthetic_train"] = synthetic_train;
  j["synthetic_dev"] = synthetic_dev;
  j["seed"] = seed;
  j["inference_mode"] = to_string(inference_mode);
  j["selection_strategy"] = to_string(selection_strategy);
  j["human_eval_samples"] = human_eval_samples;
  j["annotator_id"] = annotator_id;
  j["review_question"] = to_string(review_question);
  j["training"] = {{"rationalizer", training_to_json(rationalizer_training)},
                   {"generator", training_to_json(generator_training)},
                   {"selector", training_to_json(selector_training)},
                   {"inference", training_to_json(inference_training)}};
  return j;
}

std::filesystem::path PipelineConfig::work_dir() const {
  if (cache_dir.is_absolute()) return cache_dir;
  return cache_root() / cache_dir;
}

std::filesystem::path PipelineConfig::checkpoints() const {
  if (checkpoint_dir.empty()) return work_dir() / "checkpoints";
  if (checkpoint_dir.is_absolute()) return checkpoint_dir;
  return work_dir() / checkpoint_dir;
}

void PipelineConfig::validate(bool dry_run) const {
  if (backend != "tiny" && backend != "pretrained")
    throw ConfigError("unknown backend '" + backend + "' (expected tiny or pretrained)");
  if (backend == "pretrained" && (encoder_id.empty() || generator_id.empty()))
    throw ConfigError("pretrained backend needs encoder_id and generator_id");
  if (!dry_run && backend == "pretrained")
    throw ConfigError(
        "pretrained backends are validate-only placeholders in this build; "
        "switch backend to 'tiny' to execute stages");
  if (tiny.hidden_dim <= 0 || tiny.heads <= 0 || tiny.layers <= 0 || tiny.ffn_dim <= 0 ||
      tiny.max_len <= 0 || tiny.max_new_tokens <= 0)
    throw ConfigError("tiny backend dimensions must be positive");
  if (tiny.hidden_dim % tiny.heads != 0)
    throw ConfigError("tiny hidden_dim must be divisible by heads");
  if (cache_dir.empty()) throw ConfigError("cache_dir must be set");
  if (!train_file.empty() && !fs::exists(train_file))
    throw ConfigError("train_file " + train_file.string() + " does not exist");
  if (!dev_file.empty() && !fs::exists(dev_file))
    throw ConfigError("dev_file " + dev_file.string() + " does not exist");
  if (train_file.empty() && synthetic_train < 30)
    throw ConfigError("synthetic_train must be at least 30");
  if (dev_file.empty() && synthetic_dev < 30) throw ConfigError("synthetic_dev must be at least 30");
  if (human_eval_samples == 0) throw ConfigError("human_eval_samples must be positive");
  if (annotator_id.empty()) throw ConfigError("annotator_id must be set");
  rationalizer_training.validate();
  generator_training.validate();
  selector_training.validate();
  inference_training.validate();
}

// ------------------------------ manifest ------------------------------

RunManifest RunManifest::load(const std::filesystem::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + file.string() + " is not valid JSON: " + e.what());
  }
  RunManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1)
      throw FormatError("manifest " + file.string() + " has unsupported format_version " +
                        std::to_string(m.format_version));
    m.config_digest = j.at("config_digest").get<std::string>();
    m.config_snapshot = j.at("config");
    for (const auto& [name, rec] : j.at("stages").items()) {
      StageRecord r;
      r.complete = rec.at("complete").get<bool>();
      r.wall_ms = rec.at("wall_ms").get<std::int64_t>();
      for (const auto& [path, digest] : rec.at("digests").items())
        r.digests[path] = digest.get<std::string>();
      if (r.complete && r.digests.empty())
        throw FormatError("manifest " + file.string() + " marks stage '" + name +
                          "' complete without artifacts");
      m.stages[name] = std::move(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + file.string() + " is missing a field: " + e.what());
  }
  return m;
}

void RunManifest::save(const std::filesystem::path& file) const {
  nlohmann::json j;
  j["format_version"] = format_version;
  j["config_digest"] = config_digest;
  j["config"] = config_snapshot;
  nlohmann::json stages_json = nlohmann::json::object();
  for (const auto& [name, rec] : stages) {
    stages_json[name] = {
        {"complete", rec.complete}, {"wall_ms", rec.wall_ms}, {"digests", rec.digests}};
  }
  j["stages"] = stages_json;
  atomic_write(file, j.dump(2) + "\n");
}

// ------------------------------ synthetic corpus ------------------------------

CorpusSplit make_synthetic_corpus(std::uint64_t seed, std::size_t n,
                                  const std::string& split_name) {
  if (n < 30)
    throw ConfigError("synthetic corpus needs at least 30 instances, got " + std::to_string(n));
  static const std::vector<std::string> colors = {"red",    "blue",  "green",
                                                  "yellow", "black", "white"};
  static const std::vector<std::string> animals = {"dog", "cat", "bird", "horse", "sheep", "fox"};
  static const std::vector<std::string> verbs = {"sleeping", "running",  "playing",
                                                 "eating",   "jumping", "resting"};
  static const std::vector<std::string> places = {"garden", "park", "barn",
                                                  "field",  "yard", "forest"};
  static const std::vector<std::string> extras = {"fence", "river", "ladder",
                                                  "bench", "tent",  "swing"};
  Rng rng(seed);
  CorpusSplit split;
  split.name = split_name;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& color = colors[static_cast<std::size_t>(rng.uniform_int(0, 5))];
    const std::string& animal = animals[static_cast<std::size_t>(rng.uniform_int(0, 5))];
    const std::string& verb = verbs[static_cast<std::size_t>(rng.uniform_int(0, 5))];
    const std::string& place = places[static_cast<std::size_t>(rng.uniform_int(0, 5))];
    const std::string& extra = extras[static_cast<std::size_t>(rng.uniform_int(0, 5))];
    // A different color, guaranteed distinct from the premise color.
    std::size_t color_index = 0;
    while (colors[color_index] != color) ++color_index;
    const std::string& other =
        colors[(color_index + 1 + static_cast<std::size_t>(rng.uniform_int(0, 4))) % 6];

    AnnotatedInstance inst;
    char id[32];
    std::snprintf(id, sizeof id, "%s-%04zu", split_name.c_str(), i);
    const std::string premise =
        "A " + color + " " + animal + " is " + verb + " in the " + place + " .";
    std::string hypothesis, explanation;
    const Label label = kAllLabels[i % 3];
    switch (label) {
      case Label::entailment:
        // Dropping the color keeps the claim true; the kept subject and
        // verb words carry the entailment.
        hypothesis = "A " + animal + " is " + verb + " in the " + place + " .";
        inst.highlight_spans = {{1, 1}, {3, 3}};
        explanation = "The premise already says a " + animal + " is " + verb + " .";
        break;
      case Label::neutral:
        // An object the premise never mentions makes the claim undecidable.
        hypothesis = "A " + color + " " + animal + " is " + verb + " near a " + extra + " .";
        inst.highlight_spans = {{7, 7}};
        explanation = "The premise does not mention a " + extra + " .";
        break;
      case Label::contradiction:
        // Swapping the color contradicts the premise outright.
        hypothesis = "A " + other + " " + animal + " is " + verb + " in the " + place + " .";
        inst.highlight_spans = {{1, 1}};
        explanation = "The " + animal + " is " + color + " rather than " + other + " .";
        break;
    }
    if (i % 20 == 7) explanation = hypothesis;  // restates the input: non-informative
    inst.base = NLIInstance{id, premise, hypothesis, label};
    inst.gold_explanation = explanation;
    split.instances.push_back(std::move(inst));
  }
  split.validate();
  return split;
}

// ------------------------------ backends and artifacts ------------------------------

namespace {

std::unique_ptr<EncoderBackend> make_encoder(const PipelineConfig& c, const Vocabulary& vocab,
                                             std::uint64_t seed) {
  if (c.backend == "tiny") return std::make_unique<TinyEncoder>(vocab, c.tiny, seed);
  return std::make_unique<PretrainedEncoderStub>(c.encoder_id, vocab);
}

std::unique_ptr<GeneratorBackend> make_generator(const PipelineConfig& c, const Vocabulary& vocab,
                                                 std::uint64_t seed) {
  if (c.backend == "tiny") return std::make_unique<TinyGenerator>(vocab, c.tiny, seed);
  return std::make_unique<PretrainedGeneratorStub>(c.generator_id, vocab);
}

struct LoadedRationalizer {
  std::unique_ptr<EncoderBackend> encoder;
  std::unique_ptr<RationalizerModel> model;
};

struct LoadedClassifier {
  std::unique_ptr<EncoderBackend> encoder;
  std::unique_ptr<NLIClassifier> model;
};

// One generated candidate per (instance, label), as cached on disk.
struct GeneratedRow {
  std::array<std::string, 3> explanation;
  std::array<std::vector<int>, 3> word_labels;
  std::array<bool, 3> empty_generation = {false, false, false};
  std::array<bool, 3> present = {false, false, false};

  ExplanationTriple triple(const std::string& id) const {
    ExplanationTriple t;
    t.instance_id = id;
    t.explanation = explanation;
    t.empty_generation = empty_generation;
    return t;
  }
};

std::map<std::string, GeneratedRow> read_generated(const fs::path& file) {
  std::map<std::string, GeneratedRow> out;
  for (const std::string& line : read_lines(file)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      const std::string id = j.at("instance_id").get<std::string>();
      const Label label = label_from_string(j.at("label").get<std::string>());
      GeneratedRow& row = out[id];
      const int li = static_cast<int>(label);
      row.explanation[li] = j.at("explanation").get<std::string>();
      row.word_labels[li] = j.at("word_labels").get<std::vector<int>>();
      row.empty_generation[li] = j.at("empty_generation").get<bool>();
      row.present[li] = true;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad generated-explanation record in " + file.string() + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, LabelDistribution> read_selections(const fs::path& file) {
  std::map<std::string, LabelDistribution> out;
  for (const std::string& line : read_lines(file)) {
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      const std::string id = j.at("instance_id").get<std::string>();
      const auto scores = j.at("scores").get<std::vector<double>>();
      if (scores.size() != kNumLabels)
        throw FormatError("selection record for '" + id + "' has " +
                          std::to_string(scores.size()) + " scores");
      LabelDistribution d;
      std::copy(scores.begin(), scores.end(), d.probs.begin());
      d.validate();
      out[id] = d;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad selection record in " + file.string() + ": " + e.what());
    }
  }
  return out;
}

// The complete triple for an instance, or an actionable error.
const GeneratedRow& row_for(const std::map<std::string, GeneratedRow>& rows,
                            const std::string& id) {
  const auto it = rows.find(id);
  if (it == rows.end())
    throw ConsistencyError("no generated explanations for instance '" + id +
                           "'; run `lirex generate`");
  for (int li = 0; li < kNumLabels; ++li)
    if (!it->second.present[li])
      throw ConsistencyError("instance '" + id + "' is missing the " +
                             to_string(kAllLabels[li]) + " candidate; run `lirex generate`");
  return it->second;
}

const LabelDistribution& selection_for(const std::map<std::string, LabelDistribution>& sel,
                                       const std::string& id) {
  const auto it = sel.find(id);
  if (it == sel.end())
    throw ConsistencyError("no selection scores for instance '" + id + "'; run `lirex select`");
  return it->second;
}

InferenceInput input_for_mode(const NLIInstance& inst, const std::string& explanation,
                              InferenceMode mode) {
  switch (mode) {
    case InferenceMode::base:
      return {inst.premise, inst.hypothesis, ""};
    case InferenceMode::expl:
      return {"", "", explanation};
    case InferenceMode::all:
      return {inst.premise, inst.hypothesis, explanation};
  }
  throw ConfigError("unreachable inference mode");
}

double majority_share(const std::vector<Label>& gold) {
  std::array<std::size_t, 3> counts = {0, 0, 0};
  for (Label l : gold) ++counts[static_cast<int>(l)];
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(gold.size());
}

}  // namespace

// ------------------------------ pipeline ------------------------------

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  config_.validate(true);
  work_dir_ = config_.work_dir();
  fs::create_directories(work_dir_);
  const std::string digest = to_hex(fnv1a(config_.to_json().dump()));
  const fs::path manifest_file = work_dir_ / "manifest.json";
  if (fs::exists(manifest_file)) {
    RunManifest existing = RunManifest::load(manifest_file);
    if (existing.config_digest == digest) manifest_ = std::move(existing);
  }
  if (manifest_.config_digest != digest) {
    manifest_ = RunManifest{};
    manifest_.config_digest = digest;
    manifest_.config_snapshot = config_.to_json();
    save_manifest();
  }
}

void Pipeline::save_manifest() const { manifest_.save(work_dir_ / "manifest.json"); }

bool Pipeline::stage_done(Stage stage) const {
  const auto it = manifest_.stages.find(to_string(stage));
  if (it == manifest_.stages.end() || !it->second.complete || it->second.digests.empty())
    return false;
  for (const auto& [rel, digest] : it->second.digests) {
    const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : work_dir_ / rel;
    if (!fs::exists(p) || file_digest(p) != digest) return false;
  }
  return true;
}

bool Pipeline::run_stage(Stage stage, bool force) {
  config_.validate(false);
  for (Stage dep : stage_deps(stage)) {
    if (!stage_done(dep))
      throw ConsistencyError("stage '" + to_string(stage) + "' needs '" + to_string(dep) +
                             "' to finish first; run `lirex " + to_string(dep) + "`");
  }
  if (!force && stage_done(stage)) return false;

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<fs::path> artifacts = dispatch(stage, force);
  if (artifacts.empty()) return true;  // human_eval still waiting on judgments

  StageRecord rec;
  rec.complete = true;
  rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  for (const fs::path& rel : artifacts) {
    const fs::path p = rel.is_absolute() ? rel : work_dir_ / rel;
    rec.digests[rel.generic_string()] = file_digest(p);
  }
  manifest_.stages[to_string(stage)] = std::move(rec);
  save_manifest();
  return true;
}

void Pipeline::run_through(Stage last, bool force) {
  for (Stage stage : kAllStages) {
    if (stage == Stage::human_eval && last != Stage::human_eval) continue;
    run_stage(stage, force);
    if (stage == last) break;
  }
}

std::vector<fs::path> Pipeline::dispatch(Stage stage, bool force) {
  switch (stage) {
    case Stage::prepare: return do_prepare();
    case Stage::train_rationalizer: return do_train_rationalizer();
    case Stage::train_generator: return do_train_generator();
    case Stage::generate: return do_generate(force);
    case Stage::train_selector: return do_train_selector();
    case Stage::select: return do_select();
    case Stage::train_inference: return do_train_inference();
    case Stage::evaluate: return do_evaluate();
    case Stage::probe: return do_probe();
    case Stage::human_eval: return do_human_eval();
  }
  throw ConfigError("unreachable stage");
}

// ------------------------------ stage bodies ------------------------------

namespace {

// Vocabulary covering every surface the models can see: raw texts, gold
// explanations, bracketed hypothesis renderings, prompt keywords, label
// words, and the empty-generation sentinel.
Vocabulary build_vocab(const std::vector<const CorpusSplit*>& splits) {
  std::vector<std::string> texts;
  for (const CorpusSplit* split : splits) {
    for (const AnnotatedInstance& inst : split->instances) {
      texts.push_back(inst.base.premise);
      texts.push_back(inst.base.hypothesis);
      if (!inst.gold_explanation.empty()) texts.push_back(inst.gold_explanation);
      const std::size_t words = whitespace_words(inst.base.hypothesis).size();
      texts.push_back(
          apply_rationale_brackets(inst.base.hypothesis, std::vector<int>(words, 1)));
    }
  }
  std::vector<std::string> extra = {"Premise:", "Hypothesis:", "Explanation:"};
  for (Label l : kAllLabels) extra.push_back(to_string(l));
  extra.push_back("no");
  extra.push_back("explanation");
  return Vocabulary::build_from_texts(texts, extra);
}

}  // namespace

std::vector<fs::path> Pipeline::do_prepare() {
  const CorpusSplit train =
      config_.train_file.empty()
          ? make_synthetic_corpus(config_.seed, config_.synthetic_train, "train")
          : load_esnli(config_.train_file, "train");
  const CorpusSplit dev =
      config_.dev_file.empty()
          ? make_synthetic_corpus(derived_seed(config_.seed, "dev"), config_.synthetic_dev, "dev")
          : load_esnli(config_.dev_file, "dev");
  write_jsonl(train, work_dir_ / "corpus/train.jsonl");
  write_jsonl(dev, work_dir_ / "corpus/dev.jsonl");
  const Vocabulary vocab = build_vocab({&train, &dev});
  vocab.save(work_dir_ / "corpus/vocab.json");
  return {"corpus/train.jsonl", "corpus/dev.jsonl", "corpus/vocab.json"};
}

namespace {

fs::path ckpt_artifact(const PipelineConfig& c, const std::string& model,
                       const std::string& file) {
  if (c.checkpoint_dir.empty()) return fs::path("checkpoints") / model / file;
  if (c.checkpoint_dir.is_absolute()) return c.checkpoints() / model / file;
  return c.checkpoint_dir / model / file;
}

}  // namespace

std::vector<fs::path> Pipeline::do_train_rationalizer() {
  const CorpusSplit train = read_jsonl(work_dir_ / "corpus/train.jsonl", "train");
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  auto encoder = make_encoder(config_, vocab, config_.rationalizer_training.seed);
  RationalizerModel model(*encoder, config_.rationalizer_training.seed);
  const RationalizerReport rep = train_rationalizer(model, train, config_.rationalizer_training);
  save_checkpoint(config_.checkpoints() / "rationalizer", "rationalizer", vocab,
                  config_.rationalizer_training.seed, tiny_to_json(config_.tiny),
                  model.all_parameters());
  nlohmann::json report = {{"loss_before", rep.loss_before},
                           {"loss_after", rep.loss_after},
                           {"epoch_loss", rep.epoch_loss},
                           {"token_accuracy", rep.token_accuracy}};
  atomic_write(work_dir_ / "reports/train_rationalizer.json", report.dump(2) + "\n");
  return {ckpt_artifact(config_, "rationalizer", "metadata.json"),
          ckpt_artifact(config_, "rationalizer", "params.bin"),
          "reports/train_rationalizer.json"};
}

std::vector<fs::path> Pipeline::do_train_generator() {
  const CorpusSplit train = read_jsonl(work_dir_ / "corpus/train.jsonl", "train");
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  const FilterResult filtered = filter_noninformative(train);
  std::set<std::string> held_ids;
  for (const AnnotatedInstance& inst : filtered.held_out.instances)
    held_ids.insert(inst.base.instance_id);
  auto gen = make_generator(config_, vocab, config_.generator_training.seed);
  const FineTuneReport rep =
      train_generator(*gen, filtered.kept, held_ids, config_.generator_training);
  save_checkpoint(config_.checkpoints() / "generator", "generator", vocab,
                  config_.generator_training.seed, tiny_to_json(config_.tiny),
                  gen->parameters());
  nlohmann::json report = {{"nll_before", rep.nll_before},
                           {"nll_after", rep.nll_after},
                           {"epoch_nll", rep.epoch_nll},
                           {"trained_on", filtered.kept.instances.size()},
                           {"held_out", filtered.held_out.instances.size()}};
  atomic_write(work_dir_ / "reports/train_generator.json", report.dump(2) + "\n");
  return {ckpt_artifact(config_, "generator", "metadata.json"),
          ckpt_artifact(config_, "generator", "params.bin"), "reports/train_generator.json"};
}

namespace {

LoadedRationalizer load_rationalizer(const PipelineConfig& c, const Vocabulary& vocab) {
  LoadedRationalizer r;
  r.encoder = make_encoder(c, vocab, c.rationalizer_training.seed);
  r.model = std::make_unique<RationalizerModel>(*r.encoder, c.rationalizer_training.seed);
  load_checkpoint(c.checkpoints() / "rationalizer", "rationalizer", vocab,
                  r.model->all_parameters());
  r.model->mark_trained();
  return r;
}

LoadedClassifier load_classifier(const PipelineConfig& c, const Vocabulary& vocab,
                                 const std::string& kind, std::uint64_t seed) {
  LoadedClassifier r;
  r.encoder = make_encoder(c, vocab, seed);
  r.model = std::make_unique<NLIClassifier>(*r.encoder, kind, seed);
  load_checkpoint(c.checkpoints() / kind, kind, vocab, r.model->all_parameters());
  r.model->mark_trained();
  return r;
}

std::unique_ptr<GeneratorBackend> load_generator(const PipelineConfig& c,
                                                 const Vocabulary& vocab) {
  auto gen = make_generator(c, vocab, c.generator_training.seed);
  load_checkpoint(c.checkpoints() / "generator", "generator", vocab, gen->parameters());
  return gen;
}

}  // namespace

std::vector<fs::path> Pipeline::do_generate(bool force) {
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  LoadedRationalizer rat = load_rationalizer(config_, vocab);
  auto gen = load_generator(config_, vocab);

  std::vector<fs::path> artifacts;
  for (const std::string& split_name : {std::string{"train"}, std::string{"dev"}}) {
    const CorpusSplit split =
        read_jsonl(work_dir_ / ("corpus/" + split_name + ".jsonl"), split_name);
    const fs::path rel = fs::path("artifacts") / ("triples_" + split_name + ".jsonl");
    const fs::path out_path = work_dir_ / rel;

    // Previously generated candidates are reused only when the rationale
    // the current model predicts matches the one they were generated from.
    std::map<std::string, GeneratedRow> cached;
    if (!force && fs::exists(out_path)) cached = read_generated(out_path);

    std::string out;
    for (const AnnotatedInstance& inst : split.instances) {
      const TokenSeq words = whitespace_words(inst.base.hypothesis);
      for (int li = 0; li < kNumLabels; ++li) {
        const Label label = kAllLabels[li];
        const RationaleMask mask = rat.model->predict(inst.base, label);
        const TokenSeq hyp_seq = build_hypothesis_sequence(inst.base.hypothesis, *rat.encoder);
        const std::vector<int> word_labels =
            project_to_words(inst.base.hypothesis, hyp_seq, mask);

        std::string explanation;
        bool empty_generation = false;
        const auto it = cached.find(inst.base.instance_id);
        if (it != cached.end() && it->second.present[li] &&
            it->second.word_labels[li] == word_labels) {
          explanation = it->second.explanation[li];
          empty_generation = it->second.empty_generation[li];
        } else {
          explanation = generate_explanation(*gen, inst.base.premise, inst.base.hypothesis,
                                             word_labels);
          empty_generation = explanation.empty();
          if (empty_generation) explanation = kEmptyExplanationSentinel;
        }

        nlohmann::json row;
        row["instance_id"] = inst.base.instance_id;
        row["label"] = to_string(label);
        std::vector<std::string> rationale_words;
        for (std::size_t w = 0; w < word_labels.size(); ++w)
          if (word_labels[w] == 1) rationale_words.push_back(words[w].text);
        row["rationale_words"] = rationale_words;
        row["word_labels"] = word_labels;
        row["explanation"] = explanation;
        row["empty_generation"] = empty_generation;
        out += row.dump() + "\n";
      }
    }
    atomic_write(out_path, out);
    artifacts.push_back(rel);
  }
  return artifacts;
}

std::vector<fs::path> Pipeline::do_train_selector() {
  const CorpusSplit train = read_jsonl(work_dir_ / "corpus/train.jsonl", "train");
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  auto encoder = make_encoder(config_, vocab, config_.selector_training.seed);
  NLIClassifier selector(*encoder, "selector", config_.selector_training.seed);
  const SelectorReport rep = train_selector(selector, train, config_.selector_training);
  save_checkpoint(config_.checkpoints() / "selector", "selector", vocab,
                  config_.selector_training.seed, tiny_to_json(config_.tiny),
                  selector.all_parameters());
  nlohmann::json report = {{"loss_before", rep.loss_before},
                           {"loss_after", rep.loss_after},
                           {"epoch_loss", rep.epoch_loss},
                           {"accuracy", rep.accuracy}};
  atomic_write(work_dir_ / "reports/train_selector.json", report.dump(2) + "\n");
  return {ckpt_artifact(config_, "selector", "metadata.json"),
          ckpt_artifact(config_, "selector", "params.bin"), "reports/train_selector.json"};
}

std::vector<fs::path> Pipeline::do_select() {
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  LoadedClassifier selector =
      load_classifier(config_, vocab, "selector", config_.selector_training.seed);

  std::vector<fs::path> artifacts;
  for (const std::string& split_name : {std::string{"train"}, std::string{"dev"}}) {
    const CorpusSplit split =
        read_jsonl(work_dir_ / ("corpus/" + split_name + ".jsonl"), split_name);
    const auto rows =
        read_generated(work_dir_ / ("artifacts/triples_" + split_name + ".jsonl"));
    std::string out;
    for (const AnnotatedInstance& inst : split.instances) {
      const GeneratedRow& row = row_for(rows, inst.base.instance_id);
      const LabelDistribution scores =
          selection_scores(*selector.model, inst.base, row.triple(inst.base.instance_id));
      nlohmann::json rec;
      rec["instance_id"] = inst.base.instance_id;
      rec["scores"] = std::vector<double>(scores.probs.begin(), scores.probs.end());
      out += rec.dump() + "\n";
    }
    const fs::path rel = fs::path("artifacts") / ("selection_" + split_name + ".jsonl");
    atomic_write(work_dir_ / rel, out);
    artifacts.push_back(rel);
  }
  return artifacts;
}

std::vector<fs::path> Pipeline::do_train_inference() {
  const CorpusSplit train = read_jsonl(work_dir_ / "corpus/train.jsonl", "train");
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  const auto rows = read_generated(work_dir_ / "artifacts/triples_train.jsonl");
  const auto selections = read_selections(work_dir_ / "artifacts/selection_train.jsonl");

  std::vector<InferenceExample> examples;
  for (const AnnotatedInstance& inst : train.instances) {
    InferenceExample ex;
    ex.instance = inst.base;
    ex.triple = row_for(rows, inst.base.instance_id).triple(inst.base.instance_id);
    ex.selection = selection_for(selections, inst.base.instance_id);
    // The label-reading variants distill the selector's distribution; the
    // pair-only variant has no candidates to distill and targets the gold label.
    ex.target.dist = config_.inference_mode == InferenceMode::base ? one_hot(inst.base.gold_label)
                                                                   : ex.selection;
    examples.push_back(std::move(ex));
  }
  auto encoder = make_encoder(config_, vocab, config_.inference_training.seed);
  NLIClassifier model(*encoder, "inference", config_.inference_training.seed);
  const InferenceReport rep =
      train_inference(model, examples, config_.inference_mode, config_.selection_strategy,
                      config_.inference_training);
  save_checkpoint(config_.checkpoints() / "inference", "inference", vocab,
                  config_.inference_training.seed, tiny_to_json(config_.tiny),
                  model.all_parameters());
  nlohmann::json report = {{"loss_before", rep.loss_before},
                           {"loss_after", rep.loss_after},
                           {"epoch_loss", rep.epoch_loss},
                           {"accuracy", rep.accuracy},
                           {"mode", to_string(config_.inference_mode)},
                           {"strategy", to_string(config_.selection_strategy)}};
  atomic_write(work_dir_ / "reports/train_inference.json", report.dump(2) + "\n");
  return {ckpt_artifact(config_, "inference", "metadata.json"),
          ckpt_artifact(config_, "inference", "params.bin"), "reports/train_inference.json"};
}

std::vector<fs::path> Pipeline::do_evaluate() {
  const CorpusSplit dev = read_jsonl(work_dir_ / "corpus/dev.jsonl", "dev");
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  const auto rows = read_generated(work_dir_ / "artifacts/triples_dev.jsonl");
  const auto selections = read_selections(work_dir_ / "artifacts/selection_dev.jsonl");
  LoadedClassifier inference =
      load_classifier(config_, vocab, "inference", config_.inference_training.seed);
  LoadedRationalizer rat = load_rationalizer(config_, vocab);

  std::vector<Label> gold, predicted;
  std::vector<RationaleMask> gold_masks, predicted_masks;
  for (const AnnotatedInstance& inst : dev.instances) {
    const LabelDistribution& sel = selection_for(selections, inst.base.instance_id);
    const GeneratedRow& row = row_for(rows, inst.base.instance_id);
    const Label chosen = select_max(sel);
    const std::string& explanation = row.explanation[static_cast<int>(chosen)];
    gold.push_back(inst.base.gold_label);
    predicted.push_back(predict_label(*inference.model,
                                      input_for_mode(inst.base, explanation,
                                                     config_.inference_mode),
                                      config_.inference_mode)
                            .argmax());
    if (!inst.highlight_spans.empty()) {
      const TokenSeq hyp_seq = build_hypothesis_sequence(inst.base.hypothesis, *rat.encoder);
      gold_masks.push_back(mask_from_highlights(inst, hyp_seq));
      predicted_masks.push_back(rat.model->predict(inst.base, inst.base.gold_label));
    }
  }

  MetricReport inference_report;
  inference_report.name = "inference";
  inference_report.n = dev.instances.size();
  inference_report.seed = config_.seed;
  const double acc = accuracy(predicted, gold);
  const double majority = majority_share(gold);
  inference_report.values["accuracy"] = acc;
  inference_report.values["accuracy_majority"] = majority;
  inference_report.values["gain_over_majority"] = acc - majority;
  inference_report.validate();

  std::string out = metric_to_json(inference_report).dump() + "\n";
  if (!gold_masks.empty()) {
    const TokenPRF prf = token_prf(predicted_masks, gold_masks);
    MetricReport rationale_report;
    rationale_report.name = "rationale_tokens";
    rationale_report.n = gold_masks.size();
    rationale_report.seed = config_.seed;
    rationale_report.values["precision"] = prf.precision;
    rationale_report.values["recall"] = prf.recall;
    rationale_report.values["f1"] = prf.f1;
    rationale_report.validate();
    out += metric_to_json(rationale_report).dump() + "\n";
  }
  atomic_write(work_dir_ / "reports/evaluation.jsonl", out);
  return {"reports/evaluation.jsonl"};
}

std::vector<fs::path> Pipeline::do_probe() {
  const CorpusSplit train = read_jsonl(work_dir_ / "corpus/train.jsonl", "train");
  const CorpusSplit dev = read_jsonl(work_dir_ / "corpus/dev.jsonl", "dev");
  const Vocabulary vocab = Vocabulary::load(work_dir_ / "corpus/vocab.json");
  const auto train_rows = read_generated(work_dir_ / "artifacts/triples_train.jsonl");
  const auto train_sel = read_selections(work_dir_ / "artifacts/selection_train.jsonl");
  const auto dev_rows = read_generated(work_dir_ / "artifacts/triples_dev.jsonl");
  const auto dev_sel = read_selections(work_dir_ / "artifacts/selection_dev.jsonl");

  std::vector<InferenceExample> examples;
  for (const AnnotatedInstance& inst : train.instances) {
    InferenceExample ex;
    ex.instance = inst.base;
    ex.triple = row_for(train_rows, inst.base.instance_id).triple(inst.base.instance_id);
    ex.selection = selection_for(train_sel, inst.base.instance_id);
    ex.target.dist = one_hot(inst.base.gold_label);  // diagnostic models, not distillation
    examples.push_back(std::move(ex));
  }

  // Three fresh readers over the same data: pair plus explanation, pair
  // alone, explanation alone.
  auto train_probe_model = [&](InferenceMode mode, const std::string& tag)
      -> std::pair<std::unique_ptr<EncoderBackend>, std::unique_ptr<NLIClassifier>> {
    const std::uint64_t seed = derived_seed(config_.inference_training.seed, tag);
    auto enc = make_encoder(config_, vocab, seed);
    auto model = std::make_unique<NLIClassifier>(*enc, "inference", seed);
    train_inference(*model, examples, mode, SelectionStrategy::max, config_.inference_training);
    return {std::move(enc), std::move(model)};
  };
  auto [enc_all, model_all] = train_probe_model(InferenceMode::all, "probe_all");
  auto [enc_base, model_base] = train_probe_model(InferenceMode::base, "probe_base");
  auto [enc_expl, model_expl] = train_probe_model(InferenceMode::expl, "probe_expl");

  std::vector<EvalItem> items;
  std::vector<ProbeItem> probe_items;
  for (const AnnotatedInstance& inst : dev.instances) {
    const GeneratedRow& row = row_for(dev_rows, inst.base.instance_id);
    const LabelDistribution& sel = selection_for(dev_sel, inst.base.instance_id);
    const Label chosen = select_max(sel);
    items.push_back({inst.base, row.explanation[static_cast<int>(chosen)]});
    probe_items.push_back({inst.base, row.triple(inst.base.instance_id), sel});
  }

  MetricReport faith = faithfulness_probe(*model_all, *model_base, *model_expl, items);
  faith.seed = config_.seed;
  const MetricReport spurious = spurious_probe(*model_all, InferenceMode::all, probe_items,
                                               derived_seed(config_.seed, "spurious"));
  const std::string out =
      metric_to_json(faith).dump() + "\n" + metric_to_json(spurious).dump() + "\n";
  atomic_write(work_dir_ / "reports/probes.jsonl", out);
  return {"reports/probes.jsonl"};
}

namespace {

std::vector<HumanEvalSample> read_samples(const fs::path& file) {
  std::vector<HumanEvalSample> samples;
  for (const std::string& line : read_lines(file)) {
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      HumanEvalSample s;
      s.instance_id = j.at("instance_id").get<std::string>();
      s.premise = j.at("premise").get<std::string>();
      s.hypothesis = j.at("hypothesis").get<std::string>();
      s.predicted_label = j.at("predicted_label").get<std::string>();
      s.rationale_text = j.at("rationale_text").get<std::string>();
      s.explanation = j.at("explanation").get<std::string>();
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad review sample in " + file.string() + ": " + e.what());
    }
  }
  return samples;
}

}  // namespace

std::vector<fs::path> Pipeline::do_human_eval() {
  const CorpusSplit dev = read_jsonl(work_dir_ / "corpus/dev.jsonl", "dev");
  const auto rows = read_generated(work_dir_ / "artifacts/triples_dev.jsonl");
  const auto selections = read_selections(work_dir_ / "artifacts/selection_dev.jsonl");

  const std::size_t count = std::min(config_.human_eval_samples, dev.instances.size());
  const std::vector<std::size_t> picked =
      sample_indices(dev.instances.size(), count, derived_seed(config_.seed, "human_eval"));

  std::vector<HumanEvalSample> samples;
  std::string out;
  for (std::size_t idx : picked) {
    const AnnotatedInstance& inst = dev.instances[idx];
    const GeneratedRow& row = row_for(rows, inst.base.instance_id);
    const LabelDistribution& sel = selection_for(selections, inst.base.instance_id);
    const Label chosen = select_max(sel);
    HumanEvalSample s;
    s.instance_id = inst.base.instance_id;
    s.premise = inst.base.premise;
    s.hypothesis = inst.base.hypothesis;
    s.predicted_label = to_string(chosen);
    s.rationale_text = apply_rationale_brackets(inst.base.hypothesis,
                                                row.word_labels[static_cast<int>(chosen)]);
    s.explanation = row.explanation[static_cast<int>(chosen)];
    nlohmann::json j = {{"instance_id", s.instance_id},
                        {"premise", s.premise},
                        {"hypothesis", s.hypothesis},
                        {"predicted_label", s.predicted_label},
                        {"rationale_text", s.rationale_text},
                        {"explanation", s.explanation}};
    out += j.dump() + "\n";
    samples.push_back(std::move(s));
  }
  const fs::path samples_rel = "artifacts/human_eval_samples.jsonl";
  atomic_write(work_dir_ / samples_rel, out);

  const fs::path records_rel = "artifacts/human_eval_records.jsonl";
  const fs::path records_path = work_dir_ / records_rel;
  if (!fs::exists(records_path)) return {};  // judgments not started yet
  HumanEvalSession session(records_path, samples, config_.review_question, config_.annotator_id);
  if (!session.complete()) return {};  // judgments still in progress

  std::size_t yes = 0;
  for (const AnnotationRecord& r : session.records()) yes += r.judgment == 1 ? 1u : 0u;
  nlohmann::json report = {
      {"annotator_id", config_.annotator_id},
      {"question", to_string(config_.review_question)},
      {"n", session.total_count()},
      {"yes", yes},
      {"yes_rate", static_cast<double>(yes) / static_cast<double>(session.total_count())}};
  atomic_write(work_dir_ / "reports/human_eval.json", report.dump(2) + "\n");
  return {samples_rel, records_rel, "reports/human_eval.json"};
}

void Pipeline::review(std::istream& in, std::ostream& out) {
  const fs::path samples_path = work_dir_ / "artifacts/human_eval_samples.jsonl";
  if (!fs::exists(samples_path))
    throw ConsistencyError("no review samples prepared; run `lirex human_eval` first");
  const std::vector<HumanEvalSample> samples = read_samples(samples_path);
  bool complete = false;
  {
    HumanEvalSession session(work_dir_ / "artifacts/human_eval_records.jsonl", samples,
                             config_.review_question, config_.annotator_id);
    out << "question: " << to_string(config_.review_question) << "\n";
    while (auto s = session.next_unjudged()) {
      out << "\n[" << (session.judged_count() + 1) << "/" << session.total_count()
          << "] instance " << s->instance_id << "\n"
          << "  premise:     " << s->premise << "\n"
          << "  hypothesis:  " << s->hypothesis << "\n"
          << "  rationale:   " << s->rationale_text << "\n"
          << "  predicted:   " << s->predicted_label << "\n"
          << "  explanation: " << s->explanation << "\n"
          << "answer (y/n, q to stop): " << std::flush;
      std::string line;
      if (!std::getline(in, line)) break;
      const std::string token = normalize_whitespace(line);
      if (token == "q" || token == "Q") break;
      int judgment;
      if (token == "y" || token == "Y" || token == "1")
        judgment = 1;
      else if (token == "n" || token == "N" || token == "0")
        judgment = 0;
      else {
        out << "please answer y or n\n";
        continue;
      }
      session.record(s->instance_id, judgment);
    }
    out << "\njudged " << session.judged_count() << " of " << session.total_count() << "\n";
    complete = session.complete();
  }
  if (complete) {
    run_stage(Stage::human_eval);
    out << "review complete; report written to reports/human_eval.json\n";
  }
}

}  // namespace lirex
