// vcse: run, sweep and aggregate gridworld exploration experiments.
//
//   vcse run <config.json> [--seeds N] [--budget STEPS] [--threads T]
//   vcse preset <name> --out <dir> [--config base.json] [--seeds N] [--budget STEPS] [--threads T]
//   vcse aggregate <dir>... [--out <dir>]
//   vcse validate <config.json>
//
// Exit codes: 0 ok, 2 config error, 3 runtime failure. Errors are also
// reported as one JSON object on stderr.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vcse/cli/config.hpp"
#include "vcse/cli/runner.hpp"
#include "vcse/error.hpp"

namespace fs = std::filesystem;
using namespace vcse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int report(int code, const std::string& kind, const std::string& message, const std::string& field = "") {
  nlohmann::json j = {{"error", kind}, {"message", message}, {"exit_code", code}};
  if (!field.empty()) j["field"] = field;
  std::cerr << j.dump() << "\n";
  return code;
}

struct Overrides {
  std::optional<int> seeds;
  std::optional<std::int64_t> budget;
  std::optional<int> threads;
};

void apply(cli::ExperimentConfig& c, const Overrides& o) {
  if (o.seeds) {
    if (*o.seeds < 1) throw ConfigError("--seeds", "must be >= 1");
    c.seeds.resize(static_cast<std::size_t>(*o.seeds));
    std::iota(c.seeds.begin(), c.seeds.end(), std::uint64_t{0});
  }
  if (o.budget) c.budget_steps = *o.budget;
  if (const char* dir = std::getenv("VCSE_OUTPUT_DIR"); dir && *dir) c.output_dir = dir;
}

cli::ExperimentConfig load(const std::string& path) {
  std::string text;
  try {
    text = cli::read_file(path);
  } catch (const Error& e) {
    throw ConfigError("config", e.what());
  }
  return cli::parse_config(text);
}

void print_summary(const std::vector<cli::ConditionSummary>& rows) {
  for (const auto& s : rows) {
    std::cout << s.label << ": success IQM " << cli::iqm(s.final_success) << " (std " << cli::stddev(s.final_success)
              << ") over " << s.seeds.size() << " seeds\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value-conditional state entropy exploration experiments"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every seed of a config (or the preset it names)");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::string preset_name, out_dir, base_path;
  auto* preset = app.add_subcommand("preset", "Run a named ablation preset");
  preset->add_option("name", preset_name, "Fig3, Fig4BetaSweep, Fig7aValueOracle, Fig7bRCSE, Fig7cBatchSize, Fig8Heatmap")
      ->required();
  preset->add_option("--out", out_dir, "Output directory")->required();
  preset->add_option("--config", base_path, "Base config the preset overrides");

  for (auto* sub : {run, preset}) {
    sub->add_option("--seeds", ov.seeds, "Use seeds 0..N-1");
    sub->add_option("--budget", ov.budget, "Environment steps per run");
    sub->add_option("--threads", ov.threads, "Worker threads (default: VCSE_THREADS or all cores)");
  }

  std::vector<std::string> agg_dirs;
  std::string agg_out;
  auto* aggregate = app.add_subcommand("aggregate", "Summarise completed run directories");
  aggregate->add_option("dirs", agg_dirs, "Run or sweep directories")->required();
  aggregate->add_option("--out", agg_out, "Write summary.csv/summary.json here");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", validate_path, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kExitConfig, "usage", e.what());
  }

  try {
    if (*validate) {
      const auto cfg = load(validate_path);
      std::cout << cli::to_json(cfg).dump(2) << "\n";
      return kExitOk;
    }
    if (*aggregate) {
      std::vector<fs::path> roots(agg_dirs.begin(), agg_dirs.end());
      const auto rows = cli::aggregate(roots);
      if (!agg_out.empty()) cli::write_summaries(rows, agg_out);
      std::cout << cli::summaries_csv(rows);
      return kExitOk;
    }

    std::vector<cli::ExperimentConfig> conditions;
    fs::path root;
    if (*run) {
      auto cfg = load(config_path);
      apply(cfg, ov);
      conditions = cfg.preset ? cli::preset_conditions(*cfg.preset, cfg) : std::vector{cfg};
      root = cfg.output_dir;
    } else {
      const auto p = cli::parse_preset(preset_name);
      if (!p) throw ConfigError("preset", "unknown preset '" + preset_name + "'");
      auto base = base_path.empty() ? cli::default_experiment() : load(base_path);
      base.output_dir = out_dir;
      apply(base, ov);
      conditions = cli::preset_conditions(*p, base);
      root = base.output_dir;
    }
    for (const auto& c : conditions) cli::validate(c);
    const auto rows = cli::run_conditions(conditions, root, cli::resolve_threads(ov.threads));
    print_summary(rows);
    std::cout << "wrote " << (root / "summary.json").string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    return report(kExitConfig, "config", e.what(), e.field());
  } catch (const std::exception& e) {
    return report(kExitRuntime, "runtime", e.what());
  }
}
