#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "lirex/errors.hpp"
#include "lirex/io_util.hpp"
#include "lirex/pipeline.hpp"

namespace {

using namespace lirex;

// Render one metric record per line: name, sample count, then key=value pairs.
void print_jsonl_report(const std::filesystem::path& file, std::ostream& out) {
  for (const std::string& line : read_lines(file)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    out << "  " << j.at("name").get<std::string>() << " (n=" << j.at("n").get<std::size_t>()
        << "):";
    for (const auto& [key, value] : j.at("values").items()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", value.get<double>());
      out << " " << key << "=" << buf;
    }
    out << "\n";
  }
}

void print_stage_status(const Pipeline& pipeline, Stage stage, bool worked) {
  const auto& stages = pipeline.manifest().stages;
  const auto it = stages.find(to_string(stage));
  if (!worked) {
    std::cout << "= " << to_string(stage) << " (already complete)\n";
  } else if (it != stages.end() && it->second.complete) {
    std::cout << "+ " << to_string(stage) << " (" << it->second.wall_ms << " ms)\n";
  } else {
    std::cout << "+ " << to_string(stage) << " (awaiting judgments)\n";
  }
}

void print_reports(const Pipeline& pipeline, Stage stage) {
  const std::filesystem::path dir = pipeline.work_dir() / "reports";
  if (stage == Stage::evaluate && std::filesystem::exists(dir / "evaluation.jsonl")) {
    std::cout << "evaluation:\n";
    print_jsonl_report(dir / "evaluation.jsonl", std::cout);
  }
  if (stage == Stage::probe && std::filesystem::exists(dir / "probes.jsonl")) {
    std::cout << "probes:\n";
    print_jsonl_report(dir / "probes.jsonl", std::cout);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged pipeline for rationale-conditioned NLI explanation"};
  std::string command, config_file, mode, strategy;
  std::uint64_t seed = 0;
  bool force = false;
  app.add_option("command", command,
                 "stage to run (prepare, train_rationalizer, train_generator, generate, "
                 "train_selector, select, train_inference, evaluate, probe, human_eval), "
                 "or: all, validate")
      ->required();
  app.add_option("--config", config_file, "JSON configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  CLI::Option* seed_opt = app.add_option("--seed", seed, "override the global seed");
  app.add_flag("--force", force, "rerun even when the stage is already complete");
  CLI::Option* mode_opt =
      app.add_option("--mode", mode, "inference input mode: base, expl, or all")
          ->check(CLI::IsMember({"base", "expl", "all"}));
  CLI::Option* strategy_opt =
      app.add_option("--strategy", strategy, "candidate selection strategy: max or prob")
          ->check(CLI::IsMember({"max", "prob"}));
  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lirex::read_file(config_file));
    } catch (const nlohmann::json::exception& e) {
      throw lirex::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (seed_opt->count() > 0) j["seed"] = seed;
    if (mode_opt->count() > 0) j["inference_mode"] = mode;
    if (strategy_opt->count() > 0) j["selection_strategy"] = strategy;
    const lirex::PipelineConfig config = lirex::PipelineConfig::from_json(j);

    if (command == "validate") {
      config.validate(true);
      std::cout << "config ok: backend=" << config.backend
                << " work_dir=" << config.work_dir().string() << "\n";
      return 0;
    }

    lirex::Pipeline pipeline(config);
    if (command == "all") {
      for (lirex::Stage stage : lirex::kAllStages) {
        if (stage == lirex::Stage::human_eval) continue;
        const bool worked = pipeline.run_stage(stage, force);
        print_stage_status(pipeline, stage, worked);
      }
      print_reports(pipeline, lirex::Stage::evaluate);
      print_reports(pipeline, lirex::Stage::probe);
      std::cout << "run `lirex human_eval --config " << config_file
                << "` to review explanations interactively\n";
      return 0;
    }

    const lirex::Stage stage = lirex::stage_from_string(command);
    if (stage == lirex::Stage::human_eval) {
      pipeline.run_stage(stage, force);
      if (pipeline.stage_done(stage)) {
        std::cout << "human_eval already complete; pass --force to resample\n";
      } else {
        pipeline.review(std::cin, std::cout);
      }
      return 0;
    }
    const bool worked = pipeline.run_stage(stage, force);
    print_stage_status(pipeline, stage, worked);
    print_reports(pipeline, stage);
    return 0;
  } catch (const lirex::Error& e) {
    std::cerr << "[" << command << "] error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "[" << command << "] unexpected error: " << e.what() << "\n";
    return 2;
  }
}
