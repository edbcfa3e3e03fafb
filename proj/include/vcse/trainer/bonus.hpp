#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "vcse/entropy/rewards.hpp"
#include "vcse/error.hpp"

namespace vcse::trainer {

enum class ExplorationMode { None, SE, VCSE, RCSE };

inline std::string_view exploration_mode_str(ExplorationMode m) {
  switch (m) {
    case ExplorationMode::None: return "None";
    case ExplorationMode::SE: return "SE";
    case ExplorationMode::VCSE: return "VCSE";
    case ExplorationMode::RCSE: return "RCSE";
  }
  return "None";
}

inline std::optional<ExplorationMode> parse_exploration_mode(std::string_view s) {
  for (auto m : {ExplorationMode::None, ExplorationMode::SE, ExplorationMode::VCSE, ExplorationMode::RCSE}) {
    if (exploration_mode_str(m) == s) return m;
  }
  return std::nullopt;
}

struct ExplorationConfig {
  ExplorationMode mode = ExplorationMode::VCSE;
  std::size_t k = 5;
  double beta = 0.005;  // constant for the whole run
  std::size_t bonus_batch_size = 0;  // 0: the whole on-policy rollout
  bool normalize_se_by_std = true;

  friend bool operator==(const ExplorationConfig&, const ExplorationConfig&) = default;
};

inline void validate(const ExplorationConfig& c) {
  if (c.k < 1) throw ConfigError("exploration.k", "must be >= 1");
  if (!(c.beta >= 0.0) || !std::isfinite(c.beta)) throw ConfigError("exploration.beta", "must be finite and >= 0");
  if (c.bonus_batch_size != 0 && c.k >= c.bonus_batch_size) {
    throw ConfigError("exploration.k", "must be smaller than bonus_batch_size");
  }
}

/// One intrinsic-bonus batch. The trainer fills states, extrinsic rewards,
/// raw values and rollout ids; compose_bonus fills the rest.
struct Minibatch {
  std::vector<entropy::Sample> states;  // bonus encoding of s_t
  std::vector<double> extrinsic;
  std::vector<double> raw_values;       // f_v(s_t); needed for VCSE
  std::vector<std::uint64_t> rollout_ids;
  std::vector<double> normalized_values;
  std::vector<double> intrinsic_rewards;
  std::vector<double> total_rewards;

  std::size_t size() const { return states.size(); }
};

inline constexpr double kStdFloor = 1e-8;

/// (v - mean) / std with the population std; all zeros when std < 1e-8.
inline std::vector<double> normalize_values(std::span<const double> raw) {
  if (raw.size() < 2) throw DomainError("normalize_values: need at least two values");
  const double n = static_cast<double>(raw.size());
  double mean = 0.0;
  for (double v : raw) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : raw) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(raw.size(), 0.0);
  if (sd < kStdFloor) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean) / sd;
  return out;
}

inline double population_std(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double v : xs) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : xs) var += (v - mean) * (v - mean);
  return std::sqrt(var / n);
}

/// Fills intrinsic and total rewards, total = extrinsic + beta * intrinsic.
inline Minibatch compose_bonus(Minibatch batch, const ExplorationConfig& cfg) {
  validate(cfg);
  const std::size_t n = batch.size();
  if (batch.extrinsic.size() != n) throw ShapeError("compose_bonus: extrinsic rewards missing");
  if (cfg.mode != ExplorationMode::None && n <= cfg.k) throw DomainError("compose_bonus: batch must be larger than k");

  batch.normalized_values.clear();
  switch (cfg.mode) {
    case ExplorationMode::None:
      batch.intrinsic_rewards.assign(n, 0.0);
      break;
    case ExplorationMode::SE: {
      batch.intrinsic_rewards = entropy::se_reward(batch.states, cfg.k);
      if (cfg.normalize_se_by_std) {
        const double sd = population_std(batch.intrinsic_rewards);
        if (sd >= kStdFloor) {
          for (double& r : batch.intrinsic_rewards) r /= sd;
        }
      }
      break;
    }
    case ExplorationMode::VCSE:
      if (batch.raw_values.size() != n) throw DomainError("compose_bonus: VCSE needs value estimates for every sample");
      batch.normalized_values = normalize_values(batch.raw_values);
      batch.intrinsic_rewards = entropy::vcse_reward(batch.states, batch.normalized_values, cfg.k);
      break;
    case ExplorationMode::RCSE:
      batch.normalized_values = normalize_values(batch.extrinsic);
      batch.intrinsic_rewards = entropy::rcse_reward(batch.states, batch.normalized_values, cfg.k);
      break;
  }
  batch.total_rewards.resize(n);
  for (std::size_t i = 0; i < n; ++i) batch.total_rewards[i] = batch.extrinsic[i] + cfg.beta * batch.intrinsic_rewards[i];
  return batch;
}

}  // namespace vcse::trainer
