#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "vcse/agent/a2c.hpp"
#include "vcse/agent/params.hpp"
#include "vcse/agent/policy_eval.hpp"
#include "vcse/error.hpp"
#include "vcse/gridworld/env.hpp"
#include "vcse/gridworld/model.hpp"
#include "vcse/rng.hpp"
#include "vcse/trainer/bonus.hpp"
#include "vcse/trainer/metrics.hpp"

namespace vcse::trainer {

// What the intrinsic bonus measures distances on.
enum class BonusEncoding { AgentXY, Observation };
// Where VCSE's value estimates come from: the learned extrinsic critic, or
// exact policy evaluation of the current policy on the fixed map.
enum class ValueSource { ExtrinsicCritic, PolicyEvaluation };

inline std::string_view bonus_encoding_str(BonusEncoding b) {
  return b == BonusEncoding::AgentXY ? "AgentXY" : "Observation";
}
inline std::string_view value_source_str(ValueSource v) {
  return v == ValueSource::ExtrinsicCritic ? "ExtrinsicCritic" : "PolicyEvaluation";
}

struct TrainConfig {
  int num_envs = 16;
  gridworld::ObsMode obs_mode = gridworld::ObsMode::FullOneHot;
  BonusEncoding bonus_encoding = BonusEncoding::AgentXY;
  ValueSource value_source = ValueSource::ExtrinsicCritic;
  std::int64_t eval_interval = 5000;
  int eval_episodes = 20;
  bool record_heatmap = false;
  double policy_eval_tol = 1e-6;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Passed to on_update after every learner step.
struct UpdateInfo {
  std::int64_t update = 0;
  std::int64_t steps = 0;
  std::uint64_t param_version = 0;
  const std::vector<Minibatch>* bonus_batches = nullptr;
  agent::UpdateDiagnostics diagnostics;
};

struct Callbacks {
  std::function<void(const EpisodeRecord&)> on_episode;
  std::function<void(const EvalCheckpoint&)> on_eval;
  std::function<void(const UpdateInfo&)> on_update;
};

/// Thrown when a run fails part-way; carries the metrics gathered so far.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, RunMetrics partial) : Error(what), partial_(std::move(partial)) {}
  const RunMetrics& partial() const { return partial_; }

 private:
  RunMetrics partial_;
};

/// Greedy-policy evaluation: fraction of episodes that end at the goal and
/// their mean extrinsic return.
inline EvalCheckpoint evaluate_policy(const agent::ApproximatorParams& params, const gridworld::MapSpec& spec,
                                      gridworld::ObsMode mode, int episodes, std::uint64_t seed,
                                      std::int64_t step) {
  EvalCheckpoint cp;
  cp.step = step;
  if (episodes <= 0) return cp;
  gridworld::GridEnv env(spec, mode);
  // Greedy rollouts on a fixed layout are identical, so one is enough.
  const int distinct = spec.randomize_layout ? episodes : 1;
  double successes = 0.0, returns = 0.0;
  for (int ep = 0; ep < distinct; ++ep) {
    gridworld::Observation obs = env.reset(derive_seed(seed, static_cast<std::uint64_t>(ep)));
    double ret = 0.0;
    bool success = false;
    while (!env.finished()) {
      const auto t = env.step(static_cast<gridworld::Action>(agent::greedy_action(params, obs)));
      ret += t.extrinsic_reward;
      success = t.terminated && t.extrinsic_reward > 0.0;
      obs = t.next_obs;
    }
    successes += success ? 1.0 : 0.0;
    returns += ret;
  }
  cp.success_rate = successes / distinct;
  cp.mean_return = returns / distinct;
  return cp;
}

namespace detail {

inline void validate_train(const gridworld::MapSpec& spec, const agent::AgentConfig& acfg,
                           const ExplorationConfig& ecfg, const TrainConfig& tcfg) {
  validate(ecfg);
  if (tcfg.num_envs < 1) throw ConfigError("train.num_envs", "must be >= 1");
  if (tcfg.eval_interval < 1) throw ConfigError("train.eval_interval", "must be >= 1");
  if (tcfg.eval_episodes < 0) throw ConfigError("train.eval_episodes", "must be >= 0");
  const auto rollout = static_cast<std::size_t>(tcfg.num_envs) * static_cast<std::size_t>(acfg.n_step);
  const std::size_t bonus = ecfg.bonus_batch_size == 0 ? rollout : ecfg.bonus_batch_size;
  if (ecfg.mode != ExplorationMode::None) {
    if (rollout % bonus != 0) {
      throw ConfigError("exploration.bonus_batch_size", "must divide num_envs * n_step");
    }
    if (ecfg.k >= bonus) throw ConfigError("exploration.k", "must be smaller than the bonus batch");
  }
  if (acfg.kind == agent::ApproximatorKind::Tabular && spec.randomize_layout) {
    throw ConfigError("agent.kind", "Tabular requires a fixed map");
  }
  if (tcfg.value_source == ValueSource::PolicyEvaluation && spec.randomize_layout) {
    throw ConfigError("train.value_source", "PolicyEvaluation requires a fixed map");
  }
  if (tcfg.record_heatmap && spec.randomize_layout) {
    throw ConfigError("train.record_heatmap", "heatmaps require a fixed map");
  }
}

}  // namespace detail

/// Actor-critic training with an intrinsic bonus, one on-policy rollout per
/// update:
///   1. collect num_envs x n_step transitions with the current policy;
///   2. split the rollout into bonus batches, attach f_v(s_t) (or exact
///      values), and compose r_T = r_e + beta * r_int;
///   3. update policy and total critic on r_T and the extrinsic critic on r_e.
/// Fully determined by (arguments, seed).
inline RunMetrics train(const gridworld::MapSpec& spec, const agent::AgentConfig& agent_cfg,
                        const ExplorationConfig& explore, const TrainConfig& tcfg, std::int64_t budget_steps,
                        std::uint64_t seed, const Callbacks& callbacks = {},
                        agent::ApproximatorParams* final_params = nullptr) {
  using namespace gridworld;
  validate(spec);
  detail::validate_train(spec, agent_cfg, explore, tcfg);
  if (budget_steps < 0) throw ConfigError("budget_steps", "must be >= 0");

  RunMetrics metrics;
  if (tcfg.record_heatmap) metrics.heatmap = make_heatmap(spec.width, spec.height);

  agent::AgentConfig acfg = agent_cfg;
  acfg.init_seed = derive_seed(seed, 1000 + agent_cfg.init_seed);
  agent::ApproximatorParams params(acfg, tcfg.obs_mode, obs_size(tcfg.obs_mode, spec.width, spec.height));
  if (budget_steps == 0) {
    if (final_params) *final_params = params;
    return metrics;
  }

  const auto num_envs = static_cast<std::size_t>(tcfg.num_envs);
  const auto n_step = static_cast<std::size_t>(acfg.n_step);
  const std::size_t rollout_size = num_envs * n_step;
  const std::size_t bonus_size = explore.bonus_batch_size == 0 ? rollout_size : explore.bonus_batch_size;

  std::optional<TransitionModel> model;
  std::vector<double> exact_values;
  if (tcfg.value_source == ValueSource::PolicyEvaluation) model.emplace(spec);

  Rng action_rng(derive_seed(seed, 2));
  const std::uint64_t eval_seed = derive_seed(seed, 3);
  std::vector<GridEnv> envs;
  std::vector<Observation> current;
  std::vector<std::uint64_t> episode_counter(num_envs, 0);
  std::vector<double> episode_return(num_envs, 0.0);
  envs.reserve(num_envs);
  for (std::size_t e = 0; e < num_envs; ++e) {
    envs.emplace_back(spec, tcfg.obs_mode);
    current.push_back(envs[e].reset(derive_seed(derive_seed(seed, 100 + e), 0)));
  }

  std::uint64_t param_version = 0;
  std::int64_t steps = 0;
  std::int64_t episodes = 0;
  std::int64_t next_eval = tcfg.eval_interval;

  struct StepMeta {
    std::vector<double> bonus_state;
    int model_state = -1;
    std::uint64_t version = 0;
  };

  try {
    while (steps < budget_steps) {
      agent::Rollout rollout;
      rollout.num_envs = num_envs;
      rollout.length = n_step;
      rollout.steps.reserve(rollout_size);
      std::vector<StepMeta> meta;
      meta.reserve(rollout_size);
      std::vector<EpisodeRecord> finished;

      for (std::size_t t = 0; t < n_step; ++t) {
        for (std::size_t e = 0; e < num_envs; ++e) {
          GridEnv& env = envs[e];
          StepMeta m;
          m.version = param_version;
          m.bonus_state = tcfg.bonus_encoding == BonusEncoding::AgentXY ? env.observe(ObsMode::AgentXY).data
                                                                        : current[e].data;
          if (model) m.model_state = model->index_of(env.cells(), env.pose());
          if (metrics.heatmap) record_heatmap(metrics, env.pose());

          const int action = agent::act(params, current[e], action_rng);
          Transition tr = env.step(static_cast<Action>(action));
          ++steps;
          episode_return[e] += tr.extrinsic_reward;
          const bool done = tr.terminated || tr.truncated;
          rollout.steps.push_back(agent::RolloutStep{std::move(current[e]), action, tr.extrinsic_reward, 0.0, done});
          meta.push_back(std::move(m));
          if (done) {
            EpisodeRecord rec;
            rec.step = steps;
            rec.episode = episodes++;
            rec.success = tr.terminated && tr.extrinsic_reward > 0.0;
            rec.ret = episode_return[e];
            rec.beta = explore.beta;
            finished.push_back(rec);
            episode_return[e] = 0.0;
            current[e] = env.reset(derive_seed(derive_seed(seed, 100 + e), ++episode_counter[e]));
          } else {
            current[e] = std::move(tr.next_obs);
          }
        }
      }
      rollout.last_obs = current;

      // Value estimates for the bonus, taken with the current parameters.
      std::vector<double> raw_values(rollout_size, 0.0);
      if (explore.mode == ExplorationMode::VCSE) {
        if (model) {
          const auto policy = agent::policy_table(params, *model);
          auto pe = agent::policy_evaluation(*model, policy, acfg.gamma, tcfg.policy_eval_tol, 1'000'000,
                                             exact_values.empty() ? nullptr : &exact_values);
          exact_values = std::move(pe.values);
          for (std::size_t i = 0; i < rollout_size; ++i) {
            if (meta[i].model_state < 0) throw Error("state outside the transition model");
            raw_values[i] = exact_values[static_cast<std::size_t>(meta[i].model_state)];
          }
        } else {
          for (std::size_t i = 0; i < rollout_size; ++i) raw_values[i] = agent::forward(params, rollout.steps[i].obs).v_ext;
        }
      }

      std::vector<Minibatch> batches;
      double intrinsic_sum = 0.0;
      for (std::size_t start = 0; start < rollout_size; start += bonus_size) {
        Minibatch mb;
        for (std::size_t i = start; i < start + bonus_size; ++i) {
          if (meta[i].version != param_version) throw Error("bonus batch contains off-policy transitions");
          mb.states.push_back(entropy::Sample{meta[i].bonus_state, std::nullopt});
          mb.extrinsic.push_back(rollout.steps[i].reward_ext);
          mb.rollout_ids.push_back(meta[i].version);
          if (explore.mode == ExplorationMode::VCSE) mb.raw_values.push_back(raw_values[i]);
        }
        mb = compose_bonus(std::move(mb), explore);
        for (std::size_t j = 0; j < mb.size(); ++j) {
          rollout.steps[start + j].reward_total = mb.total_rewards[j];
          intrinsic_sum += mb.intrinsic_rewards[j];
        }
        batches.push_back(std::move(mb));
      }
      const double intrinsic_mean = intrinsic_sum / static_cast<double>(rollout_size);

      const auto diag = agent::a2c_update(params, rollout, acfg.gamma, acfg.n_step);
      ++param_version;
      ++metrics.updates;

      for (EpisodeRecord& rec : finished) {
        rec.intrinsic_mean = intrinsic_mean;
        metrics.episodes.push_back(rec);
        if (callbacks.on_episode) callbacks.on_episode(rec);
      }
      if (callbacks.on_update) {
        callbacks.on_update(UpdateInfo{metrics.updates, steps, param_version - 1, &batches, diag});
      }
      metrics.total_steps = steps;

      while (steps >= next_eval) {
        const EvalCheckpoint cp = evaluate_policy(params, spec, tcfg.obs_mode, tcfg.eval_episodes, eval_seed, steps);
        metrics.evals.push_back(cp);
        if (callbacks.on_eval) callbacks.on_eval(cp);
        next_eval += tcfg.eval_interval;
      }
    }
    if (metrics.evals.empty() || metrics.evals.back().step != steps) {
      const EvalCheckpoint cp = evaluate_policy(params, spec, tcfg.obs_mode, tcfg.eval_episodes, eval_seed, steps);
      metrics.evals.push_back(cp);
      if (callbacks.on_eval) callbacks.on_eval(cp);
    }
  } catch (const std::exception& ex) {
    metrics.total_steps = steps;
    throw TrainingAborted(ex.what(), std::move(metrics));
  }
  if (final_params) *final_params = std::move(params);
  return metrics;
}

}  // namespace vcse::trainer
