#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "vcse/cli/config.hpp"
#include "vcse/cli/runner.hpp"
#include "vcse/cli/stats.hpp"

using namespace vcse;
using namespace vcse::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fresh scratch directory per test, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("vcse_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny(const std::string& label, gridworld::TaskName task = gridworld::TaskName::Empty, int size = 6) {
  ExperimentConfig c = default_experiment();
  c.label = label;
  c.task = TaskRef{task, size, false};
  c.budget_steps = 800;
  c.train.eval_interval = 200;
  c.train.eval_episodes = 1;
  c.seeds = {0, 1};
  return c;
}

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

std::string slurp(const fs::path& p) { return read_file(p); }

struct Proc {
  int code;
  std::string out, err;
};

Proc run_cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(VCSE_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

TEST(Stats, IqmOfHalfSuccesses) {
  EXPECT_DOUBLE_EQ(iqm(std::vector<double>{0, 0, 1, 1}), 0.5);
  EXPECT_DOUBLE_EQ(iqm(std::vector<double>{1, 0, 1, 0}), 0.5);
}

TEST(Stats, ConstantSeedsHaveZeroSpread) {
  const std::vector<double> xs(16, 1.0);
  EXPECT_EQ(iqm(xs), 1.0);
  EXPECT_EQ(stddev(xs), 0.0);
}

TEST(Stats, SingleSeed) {
  const std::vector<double> xs{0.35};
  EXPECT_EQ(iqm(xs), 0.35);
  EXPECT_EQ(stddev(xs), 0.0);
}

TEST(Stats, IqmDropsQuartersAndStdIsPopulation) {
  EXPECT_DOUBLE_EQ(iqm(std::vector<double>{8, 1, 7, 2, 6, 3, 5, 4}), 4.5);
  EXPECT_DOUBLE_EQ(iqm(std::vector<double>{100, 1, 2, 3, 4}), 3.0);  // one value cut from each end
  EXPECT_DOUBLE_EQ(stddev(std::vector<double>{1, 3}), 1.0);
  EXPECT_THROW(iqm(std::vector<double>{}), DomainError);
}

TEST(Stats, RanksAndSpearman) {
  EXPECT_EQ(ranks(std::vector<double>{10, 30, 20, 30}), (std::vector<double>{1, 3.5, 2, 3.5}));
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 9, 16, 100}, c{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, c), -1.0);
  EXPECT_EQ(spearman(a, std::vector<double>(5, 2.0)), 0.0);
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

TEST(Config, RoundTripIsIdentity) {
  ExperimentConfig c = tiny("round_trip", gridworld::TaskName::LavaGap, 7);
  c.agent.hidden = {32, 8};
  c.exploration.mode = trainer::ExplorationMode::RCSE;
  c.exploration.beta = 0.0125;
  c.train.value_source = trainer::ValueSource::PolicyEvaluation;
  c.train.obs_mode = gridworld::ObsMode::AgentXY;
  c.seeds = {3, 9, 27};
  c.preset = Preset::Fig7bRCSE;
  const auto back = parse_config(to_json(c).dump());
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(parse_config(to_json(default_experiment()).dump()), default_experiment());
}

TEST(Config, MinimalConfigUsesDefaults) {
  const auto c = parse_config(R"({"schema_version": 1, "task": {"name": "SimpleCrossingFixed", "size": 9}})");
  auto want = default_experiment();
  want.task = TaskRef{gridworld::TaskName::SimpleCrossingFixed, 9, std::nullopt};
  EXPECT_EQ(c, want);
}

TEST(Config, ErrorsNameTheOffendingField) {
  const std::string head = R"({"schema_version": 1, "task": {"name": "Empty", "size": 6})";
  EXPECT_EQ(field_of(head + R"(, "budget": 5})"), "budget");
  EXPECT_EQ(field_of(head + R"(, "exploration": {"beta": "big"}})"), "exploration.beta");
  EXPECT_EQ(field_of(head + R"(, "exploration": {"kk": 3}})"), "exploration.kk");
  EXPECT_EQ(field_of(head + R"(, "exploration": {"mode": "ICM"}})"), "exploration.mode");
  EXPECT_EQ(field_of(head + R"(, "agent": {"lr": 0.1}})"), "agent.lr");
  EXPECT_EQ(field_of(head + R"(, "agent": {"n_step": 0}})"), "agent.n_step");
  EXPECT_EQ(field_of(head + R"(, "train": {"num_envs": 0}})"), "train.num_envs");
  EXPECT_EQ(field_of(head + R"(, "observation": "Pixels"})"), "observation");
  EXPECT_EQ(field_of(head + R"(, "seeds": [1, 1]})"), "seeds");
  EXPECT_EQ(field_of(head + R"(, "seeds": []})"), "seeds");
  EXPECT_EQ(field_of(head + R"(, "label": "a/b"})"), "label");
  EXPECT_EQ(field_of(head + R"(, "preset": "Fig99"})"), "preset");
  EXPECT_EQ(field_of(R"({"schema_version": 1, "task": {"name": "Empty", "size": 20}})"), "task.size");
  EXPECT_EQ(field_of(R"({"schema_version": 1, "task": {"name": "Maze"}})"), "task.name");
  EXPECT_EQ(field_of(R"({"task": {"name": "Empty"}})"), "schema_version");
  EXPECT_EQ(field_of(R"({"schema_version": 2, "task": {"name": "Empty"}})"), "schema_version");
  EXPECT_EQ(field_of(R"({"schema_version": 1})"), "task");
  EXPECT_EQ(field_of(R"({"schema_version": 1, "task": {"name": "SimpleCrossingRandom"}})"), "agent.kind");
  EXPECT_EQ(field_of("{not json"), "");
}

TEST(Config, PresetNamesRoundTrip) {
  for (Preset p : kAllPresets) EXPECT_EQ(parse_preset(preset_str(p)), p);
  EXPECT_FALSE(parse_preset("Fig5").has_value());
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

TEST(Presets, BetaSweepExpandsToThreeSeAndOneVcse) {
  auto base = default_experiment();
  base.task = TaskRef{gridworld::TaskName::Empty, 6, false};
  const auto cs = preset_conditions(Preset::Fig4BetaSweep, base);
  ASSERT_EQ(cs.size(), 4u);
  const std::vector<double> betas{0.05, 0.005, 0.0005, 0.005};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(cs[i].exploration.beta, betas[i]);
    EXPECT_EQ(cs[i].exploration.mode, i < 3 ? trainer::ExplorationMode::SE : trainer::ExplorationMode::VCSE);
    EXPECT_EQ(cs[i].task.name, gridworld::TaskName::SimpleCrossingFixed);
    EXPECT_EQ(cs[i].task.size, 9);
  }
}

TEST(Presets, HeatmapPresetRecordsBothConditionsOnTheFixedCrossing) {
  auto base = default_experiment();
  base.budget_steps = 500'000;
  const auto cs = preset_conditions(Preset::Fig8Heatmap, base);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].label, "SE");
  EXPECT_EQ(cs[1].label, "VCSE");
  for (const auto& c : cs) {
    EXPECT_TRUE(c.train.record_heatmap);
    EXPECT_EQ(c.budget_steps, 100'000);
    EXPECT_EQ(c.task.randomize, std::optional<bool>(false));
  }
}

TEST(Presets, OtherPresets) {
  const auto base = default_experiment();
  const auto fig3 = preset_conditions(Preset::Fig3, base);
  ASSERT_EQ(fig3.size(), 3u);
  EXPECT_EQ(fig3[0].exploration.mode, trainer::ExplorationMode::None);
  const auto fig7a = preset_conditions(Preset::Fig7aValueOracle, base);
  ASSERT_EQ(fig7a.size(), 2u);
  EXPECT_EQ(fig7a[1].train.value_source, trainer::ValueSource::PolicyEvaluation);
  const auto fig7b = preset_conditions(Preset::Fig7bRCSE, base);
  EXPECT_EQ(fig7b[1].exploration.mode, trainer::ExplorationMode::RCSE);
  const auto fig7c = preset_conditions(Preset::Fig7cBatchSize, base);
  ASSERT_EQ(fig7c.size(), 2u);
  EXPECT_EQ(fig7c[0].exploration.bonus_batch_size, 256u);
  EXPECT_EQ(fig7c[1].exploration.bonus_batch_size, 1024u);
  EXPECT_EQ(fig7c[0].train.num_envs * fig7c[0].agent.n_step, 1024);
  std::set<std::string> hashes;
  for (Preset p : kAllPresets) {
    for (const auto& c : preset_conditions(p, base)) {
      EXPECT_EQ(c.preset, p);
      hashes.insert(condition_hash(c));
    }
  }
  EXPECT_GE(hashes.size(), 10u);
}

TEST(Presets, ConditionHashIgnoresSeedsAndOutput) {
  auto a = tiny("h");
  auto b = a;
  b.seeds = {5};
  b.output_dir = "elsewhere";
  EXPECT_EQ(condition_hash(a), condition_hash(b));
  b.exploration.beta = 0.5;
  EXPECT_NE(condition_hash(a), condition_hash(b));
}

// ---------------------------------------------------------------------------
// Running and aggregating
// ---------------------------------------------------------------------------

TEST(Runner, WritesCompleteRunDirectoriesAndSummary) {
  TempDir tmp("runner");
  const std::vector<ExperimentConfig> cs{tiny("none"), tiny("vcse")};
  auto conds = cs;
  conds[0].exploration.mode = trainer::ExplorationMode::None;
  const auto rows = run_conditions(conds, tmp.path, 2);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& c : conds) {
    for (auto seed : c.seeds) {
      const auto dir = tmp.path / c.label / ("seed_" + std::to_string(seed));
      for (const char* f : {"config.json", "metrics.csv", "evals.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << dir / f;
      }
      const auto m = json::parse(slurp(dir / "manifest.json"));
      EXPECT_EQ(m.at("status"), "complete");
      EXPECT_EQ(m.at("version"), std::string(kVersion));
      EXPECT_EQ(m.at("config_hash"), condition_hash(c));
      EXPECT_EQ(m.at("seed").get<std::uint64_t>(), seed);
      EXPECT_EQ(m.at("total_steps").get<std::int64_t>(), 800);
      EXPECT_EQ(parse_config(slurp(dir / "config.json")).seeds, std::vector<std::uint64_t>{seed});
    }
  }
  EXPECT_TRUE(fs::exists(tmp.path / "summary.json"));
  const auto csv = slurp(tmp.path / "summary.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,task,task_size,seeds,success_iqm,success_std,return_iqm,return_std");
  const auto again = aggregate({tmp.path});
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again[0].final_success, rows[0].final_success);
  EXPECT_EQ(again[0].curve_steps, (std::vector<std::int64_t>{200, 400, 600, 800}));
}

TEST(Runner, IdenticalConfigAndSeedGiveByteIdenticalCsv) {
  TempDir a("det_a"), b("det_b");
  auto c = tiny("det", gridworld::TaskName::SimpleCrossingFixed, 9);
  c.seeds = {4};
  run_conditions({c}, a.path, 1);
  run_conditions({c}, b.path, 1);
  EXPECT_EQ(slurp(a.path / "det/seed_4/metrics.csv"), slurp(b.path / "det/seed_4/metrics.csv"));
  EXPECT_EQ(slurp(a.path / "det/seed_4/evals.csv"), slurp(b.path / "det/seed_4/evals.csv"));
}

TEST(Runner, AggregateRefusesMixedTasksAndDuplicateSeeds) {
  TempDir tmp("mixed");
  run_conditions({tiny("a")}, tmp.path / "one", 1);
  run_conditions({tiny("b", gridworld::TaskName::Empty, 7)}, tmp.path / "two", 1);
  EXPECT_THROW(aggregate({tmp.path / "one", tmp.path / "two"}), ConfigError);
  EXPECT_THROW(aggregate({tmp.path / "one", tmp.path / "one"}), ConfigError);
  EXPECT_THROW(aggregate({tmp.path / "missing"}), ConfigError);
  fs::create_directories(tmp.path / "empty");
  EXPECT_THROW(aggregate({tmp.path / "empty"}), ConfigError);
}

TEST(Runner, HeatmapPresetWritesOneHeatmapPerCondition) {
  TempDir tmp("heat");
  auto base = tiny("x");
  base.seeds = {0};
  base.budget_steps = 400;
  const auto cs = preset_conditions(Preset::Fig8Heatmap, base);
  run_conditions(cs, tmp.path, 1);
  for (const char* label : {"SE", "VCSE"}) {
    const auto j = json::parse(slurp(tmp.path / label / "seed_0" / "heatmap.json"));
    EXPECT_EQ(j.at("width"), 9);
    EXPECT_EQ(j.at("total_steps"), 400);
  }
}

TEST(Runner, ThreadResolution) {
  EXPECT_EQ(resolve_threads(3), 3);
  EXPECT_GE(resolve_threads(std::nullopt), 1);
}

TEST(Runner, ParallelForPropagatesFailures) {
  std::atomic<int> ran{0};
  EXPECT_THROW(parallel_for(50, 4,
                            [&](std::size_t i) {
                              ++ran;
                              if (i == 3) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
  EXPECT_LE(ran.load(), 50);
}

TEST(BatchSizeDiagnostic, SmallAndLargeBatchesRankAlike) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> cell(1, 14);
  std::normal_distribution<double> g;
  std::vector<entropy::Sample> states;
  std::vector<double> values;
  for (int i = 0; i < 1024; ++i) {
    const int x = cell(rng), y = cell(rng);
    states.push_back({{double(x), double(y)}, std::nullopt});
    values.push_back(0.1 * (x + y) + 0.05 * g(rng));
  }
  const auto d = batch_size_rank_correlation(states, values, {}, 256, 1024);
  EXPECT_EQ(d.small, 256u);
  EXPECT_EQ(d.large, 1024u);
  EXPECT_GT(d.rank_correlation, 0.0);
  EXPECT_THROW(batch_size_rank_correlation(states, values, {}, 300, 1024), DomainError);
  values.pop_back();
  EXPECT_THROW(batch_size_rank_correlation(states, values, {}, 256, 1024), ShapeError);
}

// ---------------------------------------------------------------------------
// Command-line binary
// ---------------------------------------------------------------------------

TEST(CliBinary, ValidatePrintsNormalisedConfig) {
  TempDir tmp("cli_validate");
  std::ofstream(tmp.path / "c.json") << R"({"schema_version": 1, "task": {"name": "Empty", "size": 6}})";
  const auto p = run_cli("validate " + (tmp.path / "c.json").string(), tmp.path);
  EXPECT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(parse_config(p.out).task.name, gridworld::TaskName::Empty);
}

TEST(CliBinary, ConfigErrorsExitTwoWithJsonReport) {
  TempDir tmp("cli_bad");
  std::ofstream(tmp.path / "c.json") << R"({"schema_version": 1, "task": {"name": "Empty"}, "exploration": {"k": "five"}})";
  const auto p = run_cli("validate " + (tmp.path / "c.json").string(), tmp.path);
  EXPECT_EQ(p.code, 2);
  const auto j = json::parse(p.err);
  EXPECT_EQ(j.at("field"), "exploration.k");
  EXPECT_EQ(j.at("exit_code"), 2);
  EXPECT_EQ(run_cli("validate " + (tmp.path / "none.json").string(), tmp.path).code, 2);
  EXPECT_EQ(run_cli("preset Fig99 --out " + (tmp.path / "o").string(), tmp.path).code, 2);
  EXPECT_EQ(run_cli("frobnicate", tmp.path).code, 2);
  EXPECT_EQ(run_cli("aggregate " + (tmp.path / "nothing").string(), tmp.path).code, 2);
}

TEST(CliBinary, RunWithOverridesThenAggregate) {
  TempDir tmp("cli_run");
  const auto out = tmp.path / "runs";
  std::ofstream(tmp.path / "c.json") << json{{"schema_version", 1},
                                             {"label", "cli"},
                                             {"task", {{"name", "Empty"}, {"size", 6}}},
                                             {"train", {{"eval_interval", 100}, {"eval_episodes", 1}}},
                                             {"output_dir", out.string()}}
                                            .dump();
  const auto p = run_cli("run " + (tmp.path / "c.json").string() + " --seeds 3 --budget 300 --threads 2", tmp.path);
  ASSERT_EQ(p.code, 0) << p.err;
  for (int s = 0; s < 3; ++s) EXPECT_TRUE(fs::exists(out / "cli" / ("seed_" + std::to_string(s)) / "manifest.json"));
  const auto m = json::parse(slurp(out / "cli/seed_2/manifest.json"));
  EXPECT_EQ(m.at("budget_steps"), 300);
  const auto agg = run_cli("aggregate " + out.string() + " --out " + (tmp.path / "agg").string(), tmp.path);
  ASSERT_EQ(agg.code, 0) << agg.err;
  EXPECT_NE(agg.out.find("cli,Empty,6,3,"), std::string::npos);
  EXPECT_TRUE(fs::exists(tmp.path / "agg" / "summary.json"));
}

TEST(CliBinary, OutputDirectoryFromEnvironment) {
  TempDir tmp("cli_env");
  std::ofstream(tmp.path / "c.json") << json{{"schema_version", 1},
                                             {"label", "env"},
                                             {"task", {{"name", "Empty"}, {"size", 6}}},
                                             {"train", {{"eval_interval", 100}, {"eval_episodes", 1}}},
                                             {"budget_steps", 100}}
                                            .dump();
  const std::string cmd = "VCSE_OUTPUT_DIR=" + (tmp.path / "envout").string() + " " + VCSE_CLI_PATH + " run " +
                          (tmp.path / "c.json").string() + " >/dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(tmp.path / "envout" / "env" / "seed_0" / "manifest.json"));
}
