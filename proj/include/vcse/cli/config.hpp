#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcse/agent/checkpoint.hpp"
#include "vcse/agent/params.hpp"
#include "vcse/error.hpp"
#include "vcse/gridworld/map_json.hpp"
#include "vcse/gridworld/tasks.hpp"
#include "vcse/trainer/bonus.hpp"
#include "vcse/trainer/train.hpp"

namespace vcse::cli {

inline constexpr int kExperimentSchemaVersion = 1;

enum class Preset { Fig3, Fig4BetaSweep, Fig7aValueOracle, Fig7bRCSE, Fig7cBatchSize, Fig8Heatmap };

inline constexpr Preset kAllPresets[] = {Preset::Fig3,      Preset::Fig4BetaSweep,  Preset::Fig7aValueOracle,
                                         Preset::Fig7bRCSE, Preset::Fig7cBatchSize, Preset::Fig8Heatmap};

inline std::string_view preset_str(Preset p) {
  switch (p) {
    case Preset::Fig3: return "Fig3";
    case Preset::Fig4BetaSweep: return "Fig4BetaSweep";
    case Preset::Fig7aValueOracle: return "Fig7aValueOracle";
    case Preset::Fig7bRCSE: return "Fig7bRCSE";
    case Preset::Fig7cBatchSize: return "Fig7cBatchSize";
    case Preset::Fig8Heatmap: return "Fig8Heatmap";
  }
  return "Fig3";
}

inline std::optional<Preset> parse_preset(std::string_view s) {
  for (Preset p : kAllPresets) {
    if (preset_str(p) == s) return p;
  }
  return std::nullopt;
}

struct TaskRef {
  gridworld::TaskName name = gridworld::TaskName::SimpleCrossingFixed;
  int size = 9;
  std::optional<bool> randomize;  // unset: the task's own default

  friend bool operator==(const TaskRef&, const TaskRef&) = default;
};

/// One experimental condition run over a list of seeds.
struct ExperimentConfig {
  std::string label = "run";
  TaskRef task;
  agent::AgentConfig agent;
  trainer::ExplorationConfig exploration;
  trainer::TrainConfig train;  // train.obs_mode is the "observation" field
  std::int64_t budget_steps = 200'000;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";
  std::optional<Preset> preset;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Settings the shipped presets and the reproduction runs share: a tabular
/// actor-critic on the one-hot map, bonus distances on the agent position.
inline ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.agent.kind = agent::ApproximatorKind::Tabular;
  c.agent.learning_rate = 0.01;
  c.train.num_envs = 8;
  c.train.obs_mode = gridworld::ObsMode::FullOneHot;
  c.train.bonus_encoding = trainer::BonusEncoding::AgentXY;
  return c;
}

inline gridworld::MapSpec make_map(const TaskRef& t) { return gridworld::builtin_task(t.name, t.size, 0, t.randomize); }

inline nlohmann::json exploration_to_json(const trainer::ExplorationConfig& e) {
  return {{"mode", std::string(trainer::exploration_mode_str(e.mode))},
          {"k", e.k},
          {"beta", e.beta},
          {"bonus_batch_size", e.bonus_batch_size},
          {"normalize_se_by_std", e.normalize_se_by_std}};
}

inline nlohmann::json train_to_json(const trainer::TrainConfig& t) {
  return {{"num_envs", t.num_envs},
          {"bonus_encoding", std::string(trainer::bonus_encoding_str(t.bonus_encoding))},
          {"value_source", std::string(trainer::value_source_str(t.value_source))},
          {"eval_interval", t.eval_interval},
          {"eval_episodes", t.eval_episodes},
          {"record_heatmap", t.record_heatmap},
          {"policy_eval_tol", t.policy_eval_tol}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json task = {{"name", std::string(gridworld::task_name_str(c.task.name))}, {"size", c.task.size}};
  if (c.task.randomize) task["randomize"] = *c.task.randomize;
  nlohmann::json j = {{"schema_version", kExperimentSchemaVersion},
                      {"label", c.label},
                      {"task", task},
                      {"observation", std::string(gridworld::obs_mode_str(c.train.obs_mode))},
                      {"agent", agent::agent_config_to_json(c.agent)},
                      {"exploration", exploration_to_json(c.exploration)},
                      {"train", train_to_json(c.train)},
                      {"budget_steps", c.budget_steps},
                      {"seeds", c.seeds},
                      {"output_dir", c.output_dir}};
  if (c.preset) j["preset"] = std::string(preset_str(*c.preset));
  return j;
}

namespace detail {

using gridworld::detail::reject_unknown;

template <typename T>
T get_as(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path, "wrong type");
  }
}

template <typename Enum, typename Parse>
Enum get_enum(const nlohmann::json& j, const std::string& path, Parse parse, std::string_view expected) {
  const auto parsed = parse(get_as<std::string>(j, path));
  if (!parsed) throw ConfigError(path, "expected one of " + std::string(expected));
  return *parsed;
}

inline trainer::ExplorationConfig exploration_from_json(const nlohmann::json& j, trainer::ExplorationConfig e) {
  reject_unknown(j, {"mode", "k", "beta", "bonus_batch_size", "normalize_se_by_std"}, "exploration");
  if (j.contains("mode")) {
    e.mode = get_enum<trainer::ExplorationMode>(j["mode"], "exploration.mode", trainer::parse_exploration_mode,
                                                "None, SE, VCSE, RCSE");
  }
  if (j.contains("k")) {
    const auto k = get_as<std::int64_t>(j["k"], "exploration.k");
    if (k < 1) throw ConfigError("exploration.k", "must be >= 1");
    e.k = static_cast<std::size_t>(k);
  }
  if (j.contains("beta")) e.beta = get_as<double>(j["beta"], "exploration.beta");
  if (j.contains("bonus_batch_size")) {
    const auto b = get_as<std::int64_t>(j["bonus_batch_size"], "exploration.bonus_batch_size");
    if (b < 0) throw ConfigError("exploration.bonus_batch_size", "must be >= 0");
    e.bonus_batch_size = static_cast<std::size_t>(b);
  }
  if (j.contains("normalize_se_by_std")) {
    e.normalize_se_by_std = get_as<bool>(j["normalize_se_by_std"], "exploration.normalize_se_by_std");
  }
  trainer::validate(e);
  return e;
}

inline trainer::TrainConfig train_from_json(const nlohmann::json& j, trainer::TrainConfig t) {
  reject_unknown(j,
                 {"num_envs", "bonus_encoding", "value_source", "eval_interval", "eval_episodes", "record_heatmap",
                  "policy_eval_tol"},
                 "train");
  if (j.contains("num_envs")) t.num_envs = get_as<int>(j["num_envs"], "train.num_envs");
  if (j.contains("bonus_encoding")) {
    t.bonus_encoding = get_enum<trainer::BonusEncoding>(
        j["bonus_encoding"], "train.bonus_encoding",
        [](const std::string& s) -> std::optional<trainer::BonusEncoding> {
          if (s == "AgentXY") return trainer::BonusEncoding::AgentXY;
          if (s == "Observation") return trainer::BonusEncoding::Observation;
          return std::nullopt;
        },
        "AgentXY, Observation");
  }
  if (j.contains("value_source")) {
    t.value_source = get_enum<trainer::ValueSource>(
        j["value_source"], "train.value_source",
        [](const std::string& s) -> std::optional<trainer::ValueSource> {
          if (s == "ExtrinsicCritic") return trainer::ValueSource::ExtrinsicCritic;
          if (s == "PolicyEvaluation") return trainer::ValueSource::PolicyEvaluation;
          return std::nullopt;
        },
        "ExtrinsicCritic, PolicyEvaluation");
  }
  if (j.contains("eval_interval")) t.eval_interval = get_as<std::int64_t>(j["eval_interval"], "train.eval_interval");
  if (j.contains("eval_episodes")) t.eval_episodes = get_as<int>(j["eval_episodes"], "train.eval_episodes");
  if (j.contains("record_heatmap")) t.record_heatmap = get_as<bool>(j["record_heatmap"], "train.record_heatmap");
  if (j.contains("policy_eval_tol")) t.policy_eval_tol = get_as<double>(j["policy_eval_tol"], "train.policy_eval_tol");
  if (t.num_envs < 1) throw ConfigError("train.num_envs", "must be >= 1");
  if (t.eval_interval < 1) throw ConfigError("train.eval_interval", "must be >= 1");
  if (t.eval_episodes < 0) throw ConfigError("train.eval_episodes", "must be >= 0");
  if (!(t.policy_eval_tol > 0.0)) throw ConfigError("train.policy_eval_tol", "must be positive");
  return t;
}

inline TaskRef task_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"name", "size", "randomize"}, "task");
  TaskRef t;
  if (!j.contains("name")) throw ConfigError("task.name", "missing required field");
  t.name = get_enum<gridworld::TaskName>(j["name"], "task.name", gridworld::parse_task_name,
                                         "Empty, LavaGap, SimpleCrossingFixed, SimpleCrossingRandom, DoorKey, Unlock");
  if (t.name == gridworld::TaskName::Custom) throw ConfigError("task.name", "Custom maps are not runnable by name");
  if (j.contains("size")) t.size = get_as<int>(j["size"], "task.size");
  if (t.size < gridworld::kMinTaskSize || t.size > gridworld::kMaxTaskSize) {
    throw ConfigError("task.size", "must lie in [6, 16]");
  }
  if (j.contains("randomize")) t.randomize = get_as<bool>(j["randomize"], "task.randomize");
  return t;
}

}  // namespace detail

/// Checks that would otherwise only surface once a run starts.
inline void validate(const ExperimentConfig& c) {
  if (c.label.empty()) throw ConfigError("label", "must not be empty");
  if (c.label.find_first_of("/\\") != std::string::npos) throw ConfigError("label", "must not contain path separators");
  if (c.budget_steps < 0) throw ConfigError("budget_steps", "must be >= 0");
  if (c.seeds.empty()) throw ConfigError("seeds", "need at least one seed");
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < c.seeds.size(); ++j) {
      if (c.seeds[i] == c.seeds[j]) throw ConfigError("seeds", "duplicate seed " + std::to_string(c.seeds[i]));
    }
  }
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  gridworld::MapSpec spec;
  try {
    spec = make_map(c.task);
  } catch (const DomainError& e) {
    throw ConfigError("task", e.what());
  }
  trainer::detail::validate_train(spec, c.agent, c.exploration, c.train);
}

/// Strict parse: every key must be known, schema_version must match, and the
/// result is validated before it is returned.
inline ExperimentConfig from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"schema_version", "label", "task", "observation", "agent", "exploration", "train",
                          "budget_steps", "seeds", "output_dir", "preset"},
                         "");
  if (!j.contains("schema_version")) throw ConfigError("schema_version", "missing required field");
  if (detail::get_as<int>(j["schema_version"], "schema_version") != kExperimentSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version");
  }
  ExperimentConfig c = default_experiment();
  if (j.contains("label")) c.label = detail::get_as<std::string>(j["label"], "label");
  if (!j.contains("task")) throw ConfigError("task", "missing required field");
  c.task = detail::task_from_json(j["task"]);
  if (j.contains("agent")) c.agent = agent::agent_config_from_json(j["agent"], "agent", c.agent);
  if (j.contains("exploration")) c.exploration = detail::exploration_from_json(j["exploration"], c.exploration);
  if (j.contains("train")) c.train = detail::train_from_json(j["train"], c.train);
  if (j.contains("observation")) {
    c.train.obs_mode = detail::get_enum<gridworld::ObsMode>(j["observation"], "observation", gridworld::parse_obs_mode,
                                                            "PartialGrid, FullOneHot, AgentXY");
  }
  if (j.contains("budget_steps")) c.budget_steps = detail::get_as<std::int64_t>(j["budget_steps"], "budget_steps");
  if (j.contains("seeds")) c.seeds = detail::get_as<std::vector<std::uint64_t>>(j["seeds"], "seeds");
  if (j.contains("output_dir")) c.output_dir = detail::get_as<std::string>(j["output_dir"], "output_dir");
  if (j.contains("preset")) {
    c.preset = detail::get_enum<Preset>(j["preset"], "preset", parse_preset,
                                        "Fig3, Fig4BetaSweep, Fig7aValueOracle, Fig7bRCSE, Fig7cBatchSize, Fig8Heatmap");
  }
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return from_json(j);
}

}  // namespace vcse::cli
