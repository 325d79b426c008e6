// tabadv: train models, run attacks and write benchmark reports.
//
//   tabadv bench  --config configs/benchmark.json --out results
//   tabadv train  --config configs/benchmark.json --only dataset=adult
//   tabadv attack --config configs/benchmark.json --only model=MLP,attack=DeepFool
//   tabadv report --out results
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 some cells failed.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tabadv/errors.hpp"
#include "tabadv/harness.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kPartial = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
  std::string only;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment config (JSON)");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output directory (default: config output_dir)");
  cmd->add_option("--jobs", c.jobs, "Worker count")->check(CLI::PositiveNumber);
  cmd->add_option("--only", c.only, "Cell filter, e.g. dataset=adult,model=MLP,attack=CW");
  cmd->add_flag("-q,--quiet", c.quiet, "No progress output");
}

tabadv::ExperimentConfig load_config(const Common& c) {
  auto cfg = tabadv::ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.parallelism = *c.jobs;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

tabadv::RunOptions run_options(const Common& c, const tabadv::ExperimentConfig& cfg) {
  tabadv::RunOptions opt;
  opt.only = tabadv::CellSelector::parse(c.only);
  opt.checkpoint_dir = cfg.output_dir / "models";
  if (!c.quiet) opt.log = [](const std::string& line) { std::cerr << line << '\n'; };
  return opt;
}

int finish(const tabadv::BenchmarkResult& result) {
  tabadv::emit_reports(result, result.config.output_dir);
  const auto failed = result.failures();
  std::cerr << fmt::format("wrote {} ({} model(s), {} cell(s), {} failure(s))\n",
                           result.config.output_dir.string(), result.models.size(), result.cells.size(), failed);
  return failed == 0 ? kOk : kPartial;
}

int run(CLI::App& app, const Common& c) {
  const std::string name = app.get_subcommands().front()->get_name();
  if (name == "report") {
    const std::filesystem::path dir = c.out.empty() ? "results" : c.out;
    std::ifstream in(dir / "results.json");
    if (!in) throw tabadv::IoError(fmt::format("no results.json in {}", dir.string()));
    auto result = tabadv::BenchmarkResult::from_json(nlohmann::json::parse(in));
    result.config.output_dir = dir;
    result.config.dump_examples = false;
    tabadv::emit_reports(result, dir);
    return result.failures() == 0 ? kOk : kPartial;
  }

  auto cfg = load_config(c);
  auto opt = run_options(c, cfg);
  opt.run_attacks = name != "train";
  if (name == "bench") opt.checkpoint_dir.reset();
  return finish(tabadv::run_benchmark(cfg, opt));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imperceptibility benchmark for adversarial attacks on tabular classifiers"};
  app.require_subcommand(1);
  Common c;
  add_common(app.add_subcommand("train", "Train the configured models and save checkpoints"), c, true);
  add_common(app.add_subcommand("attack", "Attack saved (or freshly trained) models and write reports"), c, true);
  add_common(app.add_subcommand("bench", "Train, attack and report end to end"), c, true);
  auto* report = app.add_subcommand("report", "Rewrite tables from an existing results.json");
  report->add_option("--out", c.out, "Results directory (default: results)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    return run(app, c);
  } catch (const tabadv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const tabadv::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const tabadv::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
}
