#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcse/agent/checkpoint.hpp"
#include "vcse/cli/config.hpp"
#include "vcse/cli/stats.hpp"
#include "vcse/error.hpp"
#include "vcse/trainer/metrics.hpp"
#include "vcse/trainer/train.hpp"

namespace vcse::cli {

inline constexpr std::string_view kVersion = "0.1.0";

namespace fs = std::filesystem;

/// Fingerprint of a condition: the config with seeds and output_dir removed,
/// so every seed of one condition shares it.
inline std::string condition_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("seeds");
  j.erase("output_dir");
  return agent::hex64(agent::fnv1a64(j.dump()));
}

/// Conditions a preset expands to. `base` supplies seeds, budget, output
/// directory and anything the preset does not pin.
inline std::vector<ExperimentConfig> preset_conditions(Preset p, const ExperimentConfig& base) {
  using trainer::ExplorationMode;
  auto with = [&](std::string label, ExplorationMode mode, double beta) {
    ExperimentConfig c = base;
    c.preset = p;
    c.label = std::move(label);
    c.exploration.mode = mode;
    c.exploration.beta = beta;
    return c;
  };
  auto crossing = [](ExperimentConfig c) {
    c.task = TaskRef{gridworld::TaskName::SimpleCrossingFixed, 9, false};
    return c;
  };
  std::vector<ExperimentConfig> out;
  switch (p) {
    case Preset::Fig3:
      out = {with("A2C", ExplorationMode::None, 0.0), with("A2C+SE", ExplorationMode::SE, 0.005),
             with("A2C+VCSE", ExplorationMode::VCSE, 0.005)};
      break;
    case Preset::Fig4BetaSweep:
      out = {crossing(with("SE_beta0.05", ExplorationMode::SE, 0.05)),
             crossing(with("SE_beta0.005", ExplorationMode::SE, 0.005)),
             crossing(with("SE_beta0.0005", ExplorationMode::SE, 0.0005)),
             crossing(with("VCSE_beta0.005", ExplorationMode::VCSE, 0.005))};
      break;
    case Preset::Fig7aValueOracle: {
      auto learned = with("VCSE_critic", ExplorationMode::VCSE, 0.005);
      auto exact = with("VCSE_policy_eval", ExplorationMode::VCSE, 0.005);
      exact.train.value_source = trainer::ValueSource::PolicyEvaluation;
      out = {learned, exact};
      break;
    }
    case Preset::Fig7bRCSE:
      out = {with("VCSE", ExplorationMode::VCSE, 0.005), with("RCSE", ExplorationMode::RCSE, 0.005)};
      break;
    case Preset::Fig7cBatchSize: {
      // A 1024-sample rollout split into 256-sample bonus batches, or used whole.
      auto small = with("VCSE_bonus256", ExplorationMode::VCSE, 0.005);
      small.train.num_envs = 64;
      small.agent.n_step = 16;
      small.exploration.bonus_batch_size = 256;
      auto large = small;
      large.label = "VCSE_bonus1024";
      large.exploration.bonus_batch_size = 1024;
      out = {small, large};
      break;
    }
    case Preset::Fig8Heatmap:
      out = {crossing(with("SE", ExplorationMode::SE, 0.005)), crossing(with("VCSE", ExplorationMode::VCSE, 0.005))};
      for (auto& c : out) {
        c.train.record_heatmap = true;
        c.budget_steps = std::min<std::int64_t>(c.budget_steps, 100'000);
      }
      break;
  }
  for (auto& c : out) validate(c);
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct SeedResult {
  std::uint64_t seed = 0;
  fs::path dir;
  double final_success = 0.0;
  double final_return = 0.0;
  trainer::RunMetrics metrics;
};

/// Trains one seed and writes its run directory:
///   config.json, metrics.csv, evals.csv, heatmap.json (when recorded),
///   manifest.json (written last; status "complete" or "aborted").
inline SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  ExperimentConfig single = cfg;
  single.seeds = {seed};
  single.output_dir = dir.string();
  trainer::write_text((dir / "config.json").string(), to_json(single).dump(2) + "\n");

  const gridworld::MapSpec spec = make_map(cfg.task);
  nlohmann::json manifest = {{"version", std::string(kVersion)},
                             {"config_hash", condition_hash(cfg)},
                             {"label", cfg.label},
                             {"task", std::string(gridworld::task_name_str(cfg.task.name))},
                             {"task_size", cfg.task.size},
                             {"seed", seed},
                             {"budget_steps", cfg.budget_steps}};

  auto flush = [&](const trainer::RunMetrics& m, const std::string& status) {
    trainer::write_text((dir / "metrics.csv").string(), trainer::metrics_csv(m));
    trainer::write_text((dir / "evals.csv").string(), trainer::evals_csv(m));
    if (m.heatmap) {
      trainer::write_text((dir / "heatmap.json").string(),
                          trainer::heatmap_json(*m.heatmap, std::string(gridworld::task_name_str(cfg.task.name))).dump() +
                              "\n");
    }
    manifest["status"] = status;
    manifest["total_steps"] = m.total_steps;
    manifest["updates"] = m.updates;
    if (!m.evals.empty()) {
      manifest["final_success"] = m.evals.back().success_rate;
      manifest["final_return"] = m.evals.back().mean_return;
    }
    trainer::write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  };

  SeedResult r;
  r.seed = seed;
  r.dir = dir;
  try {
    r.metrics = trainer::train(spec, cfg.agent, cfg.exploration, cfg.train, cfg.budget_steps, seed);
  } catch (const trainer::TrainingAborted& e) {
    manifest["error"] = e.what();
    flush(e.partial(), "aborted");
    throw;
  }
  flush(r.metrics, "complete");
  if (!r.metrics.evals.empty()) {
    r.final_success = r.metrics.evals.back().success_rate;
    r.final_return = r.metrics.evals.back().mean_return;
  }
  return r;
}

/// Resolves the worker count: explicit value, else VCSE_THREADS, else the
/// hardware concurrency.
inline int resolve_threads(std::optional<int> requested) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("VCSE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on a bounded pool. The first failure is
/// rethrown after all workers have stopped; remaining jobs are skipped.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

struct ConditionSummary {
  std::string label;
  std::string task;
  int task_size = 0;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_success;
  std::vector<double> final_return;
  // Per evaluation step, across seeds.
  std::vector<std::int64_t> curve_steps;
  std::vector<double> curve_iqm;
  std::vector<double> curve_std;
};

inline nlohmann::json summary_json(const ConditionSummary& s) {
  return {{"label", s.label},
          {"task", s.task},
          {"task_size", s.task_size},
          {"config_hash", s.config_hash},
          {"seeds", s.seeds},
          {"final_success", s.final_success},
          {"final_return", s.final_return},
          {"success_iqm", iqm(s.final_success)},
          {"success_std", stddev(s.final_success)},
          {"return_iqm", iqm(s.final_return)},
          {"return_std", stddev(s.final_return)},
          {"curve", {{"step", s.curve_steps}, {"success_iqm", s.curve_iqm}, {"success_std", s.curve_std}}}};
}

namespace detail {

struct LoadedRun {
  nlohmann::json manifest;
  std::vector<trainer::EvalCheckpoint> evals;
};

inline std::vector<trainer::EvalCheckpoint> parse_evals_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "step,success_rate,mean_return") throw ConfigError(where, "unexpected evals.csv header");
  std::vector<trainer::EvalCheckpoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    trainer::EvalCheckpoint cp;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> cp.step >> c1 >> cp.success_rate >> c2 >> cp.mean_return) || c1 != ',' || c2 != ',') {
      throw ConfigError(where, "malformed evals.csv row: " + line);
    }
    out.push_back(cp);
  }
  return out;
}

inline LoadedRun load_run(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw ConfigError(dir.string(), "not a run directory (no manifest.json)");
  LoadedRun r;
  try {
    r.manifest = nlohmann::json::parse(read_file(manifest));
  } catch (const nlohmann::json::parse_error&) {
    throw ConfigError(manifest.string(), "invalid JSON");
  }
  if (r.manifest.value("status", "") != "complete") throw ConfigError(dir.string(), "run did not complete");
  r.evals = parse_evals_csv(read_file(dir / "evals.csv"), (dir / "evals.csv").string());
  if (r.evals.empty()) throw ConfigError(dir.string(), "run has no evaluations");
  return r;
}

// Run directories under `root`: itself if it holds a manifest, else any
// descendant that does.
inline std::vector<fs::path> find_runs(const fs::path& root) {
  if (fs::exists(root / "manifest.json")) return {root};
  if (!fs::is_directory(root)) throw ConfigError(root.string(), "no such directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "manifest.json") out.push_back(entry.path().parent_path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Groups completed runs by condition and reports IQM and std of the final
/// success rate and return, plus IQM/std curves over evaluation steps.
/// Refuses inputs that mix tasks.
inline std::vector<ConditionSummary> aggregate(const std::vector<fs::path>& roots) {
  std::vector<fs::path> dirs;
  for (const auto& r : roots) {
    auto found = detail::find_runs(r);
    dirs.insert(dirs.end(), found.begin(), found.end());
  }
  if (dirs.empty()) throw ConfigError("runs", "no completed runs found");

  std::map<std::string, ConditionSummary> by_key;
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<trainer::EvalCheckpoint>>> curves;
  std::optional<std::pair<std::string, int>> task;
  for (const auto& d : dirs) {
    const auto run = detail::load_run(d);
    const auto& m = run.manifest;
    const std::string t = m.at("task").get<std::string>();
    const int size = m.at("task_size").get<int>();
    if (!task) task = {t, size};
    if (*task != std::pair{t, size}) {
      throw ConfigError("runs", "refusing to aggregate mixed tasks (" + task->first + " " + std::to_string(task->second) +
                                    " vs " + t + " " + std::to_string(size) + ")");
    }
    const std::string key = m.at("label").get<std::string>() + "|" + m.at("config_hash").get<std::string>();
    if (!by_key.contains(key)) {
      order.push_back(key);
      ConditionSummary s;
      s.label = m.at("label").get<std::string>();
      s.task = t;
      s.task_size = size;
      s.config_hash = m.at("config_hash").get<std::string>();
      by_key.emplace(key, s);
    }
    auto& s = by_key[key];
    const auto seed = m.at("seed").get<std::uint64_t>();
    if (std::find(s.seeds.begin(), s.seeds.end(), seed) != s.seeds.end()) {
      throw ConfigError(d.string(), "seed " + std::to_string(seed) + " appears twice for " + s.label);
    }
    s.seeds.push_back(seed);
    s.final_success.push_back(run.evals.back().success_rate);
    s.final_return.push_back(run.evals.back().mean_return);
    curves[key].push_back(run.evals);
  }

  std::vector<ConditionSummary> out;
  for (const auto& key : order) {
    ConditionSummary s = by_key[key];
    const auto& runs = curves[key];
    std::size_t len = runs.front().size();
    for (const auto& r : runs) len = std::min(len, r.size());
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> xs;
      for (const auto& r : runs) xs.push_back(r[i].success_rate);
      s.curve_steps.push_back(runs.front()[i].step);
      s.curve_iqm.push_back(iqm(xs));
      s.curve_std.push_back(stddev(xs));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string summaries_csv(const std::vector<ConditionSummary>& rows) {
  std::ostringstream ss;
  ss << "label,task,task_size,seeds,success_iqm,success_std,return_iqm,return_std\n";
  ss.precision(17);
  for (const auto& s : rows) {
    ss << s.label << ',' << s.task << ',' << s.task_size << ',' << s.seeds.size() << ',' << iqm(s.final_success)
       << ',' << stddev(s.final_success) << ',' << iqm(s.final_return) << ',' << stddev(s.final_return) << '\n';
  }
  return ss.str();
}

inline void write_summaries(const std::vector<ConditionSummary>& rows, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : rows) j.push_back(summary_json(s));
  trainer::write_text((dir / "summary.json").string(), j.dump(2) + "\n");
  trainer::write_text((dir / "summary.csv").string(), summaries_csv(rows));
}

/// Runs every seed of every condition on a shared pool, one directory per
/// (condition, seed) under <output_dir>/<label>/seed_<n>, then writes the
/// aggregate next to them.
inline std::vector<ConditionSummary> run_conditions(const std::vector<ExperimentConfig>& conditions,
                                                    const fs::path& root, int threads) {
  struct Job {
    const ExperimentConfig* cfg;
    std::uint64_t seed;
    fs::path dir;
  };
  std::vector<Job> jobs;
  for (const auto& c : conditions) {
    validate(c);
    for (auto seed : c.seeds) jobs.push_back(Job{&c, seed, root / c.label / ("seed_" + std::to_string(seed))});
  }
  fs::create_directories(root);
  parallel_for(jobs.size(), threads, [&](std::size_t i) { run_seed(*jobs[i].cfg, jobs[i].seed, jobs[i].dir); });
  auto rows = aggregate({root});
  write_summaries(rows, root);
  return rows;
}

/// Intrinsic rewards for one buffer computed with small bonus batches and
/// with one large batch; Spearman correlation of the two rankings over the
/// shared samples. A diagnostic only.
struct BatchSizeDiagnostic {
  std::size_t small = 0;
  std::size_t large = 0;
  double rank_correlation = 0.0;
};

inline BatchSizeDiagnostic batch_size_rank_correlation(const std::vector<entropy::Sample>& states,
                                                       const std::vector<double>& raw_values,
                                                       const trainer::ExplorationConfig& cfg, std::size_t small,
                                                       std::size_t large) {
  if (states.size() != raw_values.size()) throw ShapeError("batch_size_rank_correlation: size mismatch");
  if (small == 0 || large % small != 0 || states.size() < large) {
    throw DomainError("batch_size_rank_correlation: need small | large <= buffer size");
  }
  auto rewards = [&](std::size_t begin, std::size_t count) {
    trainer::Minibatch mb;
    for (std::size_t i = begin; i < begin + count; ++i) {
      mb.states.push_back(states[i]);
      mb.extrinsic.push_back(0.0);
      mb.raw_values.push_back(raw_values[i]);
      mb.rollout_ids.push_back(0);
    }
    return trainer::compose_bonus(std::move(mb), cfg).intrinsic_rewards;
  };
  const auto whole = rewards(0, large);
  std::vector<double> parts;
  for (std::size_t b = 0; b < large; b += small) {
    const auto r = rewards(b, small);
    parts.insert(parts.end(), r.begin(), r.end());
  }
  return BatchSizeDiagnostic{small, large, spearman(parts, whole)};
}

}  // namespace vcse::cli
