#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vcse/entropy/estimators.hpp"
#include "vcse/entropy/knn.hpp"
#include "vcse/entropy/special.hpp"

namespace vcse::entropy {

/// State-entropy bonus log(D_s(i) + 1), D_s = 2 x Euclidean kNN distance
/// over coords. Values carried by the samples are ignored.
inline std::vector<double> se_reward(std::span<const Sample> states, std::size_t k) {
  validate_batch(states);
  detail::check_knn_args(states.size(), 0, k);
  std::vector<Sample> coords_only;
  std::span<const Sample> view = states;
  if (states.front().value.has_value()) {
    coords_only.reserve(states.size());
    for (const Sample& s : states) coords_only.push_back(Sample{s.coords, std::nullopt});
    view = coords_only;
  }
  std::vector<double> out;
  out.reserve(states.size());
  for (const KnnResult& r : knn_all(view, k, NormKind::Euclidean)) out.push_back(std::log(r.eps + 1.0));
  return out;
}

/// Per-sample intermediates of the value-conditional bonus.
struct ConditionalBonusTerm {
  std::size_t neighbor_index = 0;
  double eps_state = 0.0;
  double eps_value = 0.0;
  double eps = 0.0;
  std::size_t n_value = 0;
  double reward = 0.0;
};

/// Value-conditional bonus with all intermediates.
///
/// For each i the joint kNN is taken under max(||s - s'||, |v - v'|). The
/// neighbour count n_v uses the open window of half-width eps_v / 2 around
/// v_i, and the reward is psi(n_v + 1) / d_S + log eps.
inline std::vector<ConditionalBonusTerm> conditional_bonus_terms(std::span<const Sample> states,
                                                                 std::span<const double> values,
                                                                 std::size_t k) {
  validate_batch(states);
  if (values.size() != states.size()) throw ShapeError("vcse_reward: states and values differ in length");
  detail::check_knn_args(states.size(), 0, k);

  std::vector<Sample> joint;
  joint.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) joint.push_back(Sample{states[i].coords, values[i]});

  const double d_state = static_cast<double>(states.front().coords.size());
  const auto nn = knn_all(joint, k, NormKind::Maximum);
  std::vector<ConditionalBonusTerm> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    ConditionalBonusTerm& t = out[i];
    t.neighbor_index = nn[i].neighbor_index;
    t.eps_state = 2.0 * coord_distance(joint[i].coords, joint[t.neighbor_index].coords, NormKind::Euclidean);
    t.eps_value = 2.0 * std::abs(values[i] - values[t.neighbor_index]);
    t.eps = std::max(t.eps_state, t.eps_value);
    t.n_value = count_within(values, i, t.eps_value);
    t.reward = digamma(static_cast<double>(t.n_value) + 1.0) / d_state +
               std::log(std::max(t.eps, kDistanceFloor));
  }
  return out;
}

/// Value-conditional state-entropy bonus. `values` should already be
/// minibatch-normalised.
inline std::vector<double> vcse_reward(std::span<const Sample> states, std::span<const double> values,
                                       std::size_t k) {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& t : conditional_bonus_terms(states, values, k)) out.push_back(t.reward);
  return out;
}

/// Reward-conditional variant: one-step extrinsic rewards take the place of
/// value estimates.
inline std::vector<double> rcse_reward(std::span<const Sample> states, std::span<const double> one_step_rewards,
                                       std::size_t k) {
  return vcse_reward(states, one_step_rewards, k);
}

}  // namespace vcse::entropy
