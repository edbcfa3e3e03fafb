#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "vcse/agent/params.hpp"
#include "vcse/error.hpp"
#include "vcse/gridworld/model.hpp"

namespace vcse::agent {

using PolicyTable = std::vector<std::array<double, kNumActions>>;

struct PolicyEvaluation {
  std::vector<double> values;
  int iterations = 0;
  double residual = 0.0;  // ||T_pi V - V||_inf of the returned V
};

/// One Bellman backup of state s under the policy, with the clock-free
/// goal reward.
inline double bellman_backup(const gridworld::TransitionModel& model, const PolicyTable& policy,
                             std::span<const double> v, std::size_t s, double gamma) {
  double acc = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    const double pa = policy[s][static_cast<std::size_t>(a)];
    if (pa == 0.0) continue;
    const auto& o = model.outcome(s, a);
    double q = gridworld::TransitionModel::stationary_reward(o);
    if (!o.terminated) q += gamma * v[static_cast<std::size_t>(o.next)];
    acc += pa * q;
  }
  return acc;
}

inline double bellman_residual(const gridworld::TransitionModel& model, const PolicyTable& policy,
                               std::span<const double> v, double gamma) {
  double r = 0.0;
  for (std::size_t s = 0; s < model.num_states(); ++s) {
    r = std::max(r, std::abs(bellman_backup(model, policy, v, s, gamma) - v[s]));
  }
  return r;
}

/// Iterative policy evaluation (Jacobi sweeps) until the Bellman residual
/// is at most `tol`.
inline PolicyEvaluation policy_evaluation(const gridworld::TransitionModel& model, const PolicyTable& policy,
                                          double gamma, double tol, int max_iterations = 1'000'000,
                                          const std::vector<double>* warm_start = nullptr) {
  if (policy.size() != model.num_states()) throw ShapeError("policy table does not cover the model's states");
  if (gamma < 0.0 || gamma > 1.0) throw DomainError("gamma must lie in [0, 1]");
  if (!(tol > 0.0)) throw DomainError("tol must be positive");
  PolicyEvaluation out;
  out.values = warm_start && warm_start->size() == model.num_states() ? *warm_start
                                                                     : std::vector<double>(model.num_states(), 0.0);
  std::vector<double> next(model.num_states());
  for (int it = 0; it < max_iterations; ++it) {
    double delta = 0.0;
    for (std::size_t s = 0; s < model.num_states(); ++s) {
      next[s] = bellman_backup(model, policy, out.values, s, gamma);
      delta = std::max(delta, std::abs(next[s] - out.values[s]));
    }
    out.values.swap(next);
    out.iterations = it + 1;
    // delta is the residual of the previous iterate; the new one is at most gamma * delta.
    if (gamma * delta <= tol) {
      out.residual = bellman_residual(model, policy, out.values, gamma);
      if (out.residual <= tol) return out;
    }
  }
  throw ConvergenceError("policy_evaluation: no convergence within the iteration cap");
}

/// The approximator's action distribution at every model state.
inline PolicyTable policy_table(const ApproximatorParams& p, const gridworld::TransitionModel& model) {
  PolicyTable table(model.num_states());
  for (std::size_t s = 0; s < model.num_states(); ++s) {
    table[s] = softmax(forward(p, model.observation(s, p.obs_mode())).action_logits);
  }
  return table;
}

}  // namespace vcse::agent
