#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "vcse/agent/params.hpp"
#include "vcse/error.hpp"

namespace vcse::agent {

/// One on-policy step as the learner sees it.
struct RolloutStep {
  Observation obs;
  int action = 0;
  double reward_ext = 0.0;
  double reward_total = 0.0;
  bool done = false;  // terminated or truncated; no bootstrap across it
};

/// num_envs parallel streams of `length` steps, stored time-major:
/// steps[t * num_envs + e]. last_obs[e] follows the final step of stream e.
struct Rollout {
  std::size_t num_envs = 0;
  std::size_t length = 0;
  std::vector<RolloutStep> steps;
  std::vector<Observation> last_obs;

  const RolloutStep& at(std::size_t t, std::size_t e) const { return steps[t * num_envs + e]; }
};

/// Loss inputs with returns and advantages already fixed (treated as
/// constants by the gradient).
struct PreparedSample {
  const Observation* obs = nullptr;
  int action = 0;
  double advantage = 0.0;
  double return_total = 0.0;
  double return_ext = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss_total = 0.0;
  double value_loss_ext = 0.0;
  double entropy = 0.0;
};

/// Selects which terms a2c_loss includes; used to check terms separately.
struct LossTerms {
  bool policy = true;
  bool entropy = true;
  bool value_total = true;
  bool value_ext = true;
};

struct UpdateDiagnostics {
  LossBreakdown loss;
  double grad_norm = 0.0;
};

/// n-step discounted returns for one reward stream, bootstrapped from
/// `bootstrap[t * num_envs + e]` = value of the state after step t.
inline std::vector<double> n_step_returns(const Rollout& r, bool total_stream, std::span<const double> bootstrap,
                                          double gamma, int n_step) {
  std::vector<double> out(r.steps.size(), 0.0);
  for (std::size_t e = 0; e < r.num_envs; ++e) {
    for (std::size_t t = 0; t < r.length; ++t) {
      double ret = 0.0;
      double discount = 1.0;
      std::size_t u = t;
      bool ended = false;
      for (int i = 0; i < n_step && u < r.length; ++i, ++u) {
        const RolloutStep& s = r.at(u, e);
        ret += discount * (total_stream ? s.reward_total : s.reward_ext);
        discount *= gamma;
        if (s.done) {
          ended = true;
          ++u;
          break;
        }
      }
      if (!ended) ret += discount * bootstrap[(u - 1) * r.num_envs + e];
      out[t * r.num_envs + e] = ret;
    }
  }
  return out;
}

/// Builds loss inputs: returns for both streams and the total-critic
/// advantage, all from the current parameters.
inline std::vector<PreparedSample> prepare_batch(const ApproximatorParams& p, const Rollout& r, double gamma,
                                                 int n_step) {
  if (r.steps.size() != r.num_envs * r.length || r.last_obs.size() != r.num_envs) {
    throw ShapeError("rollout shape is inconsistent");
  }
  if (n_step < 1) throw ShapeError("n_step must be >= 1");
  const std::size_t n = r.steps.size();
  std::vector<double> v_total(n), v_ext(n), next_total(n), next_ext(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PolicyOutput o = forward(p, r.steps[i].obs);
    v_total[i] = o.v_total;
    v_ext[i] = o.v_ext;
  }
  for (std::size_t t = 0; t < r.length; ++t) {
    for (std::size_t e = 0; e < r.num_envs; ++e) {
      const std::size_t i = t * r.num_envs + e;
      if (t + 1 < r.length) {
        next_total[i] = v_total[i + r.num_envs];
        next_ext[i] = v_ext[i + r.num_envs];
      } else {
        const PolicyOutput o = forward(p, r.last_obs[e]);
        next_total[i] = o.v_total;
        next_ext[i] = o.v_ext;
      }
    }
  }
  const auto ret_total = n_step_returns(r, true, next_total, gamma, n_step);
  const auto ret_ext = n_step_returns(r, false, next_ext, gamma, n_step);
  std::vector<PreparedSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = PreparedSample{&r.steps[i].obs, r.steps[i].action, ret_total[i] - v_total[i], ret_total[i], ret_ext[i]};
  }
  return out;
}

/// Mean A2C loss over the batch
///   -A log pi(a|s) - c_H H(pi(.|s)) + c_v (R_T - v_T)^2 + c_v (R_e - v_e)^2
/// and, if `grad` is non-empty, its gradient (same length as the weights).
/// Tabular params must already own slots for every observation.
inline LossBreakdown a2c_loss(const ApproximatorParams& p, std::span<const PreparedSample> batch,
                              std::span<double> grad = {}, LossTerms terms = {}) {
  const auto& cfg = p.config();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossBreakdown lb;
  ForwardCache cache;
  for (const PreparedSample& s : batch) {
    const PolicyOutput o = forward(p, *s.obs, &cache);
    const auto probs = softmax(o.action_logits);
    const auto logp = log_softmax(o.action_logits);
    double entropy = 0.0;
    for (int a = 0; a < kNumActions; ++a) entropy -= probs[a] * logp[a];
    const double et = s.return_total - o.v_total;
    const double ee = s.return_ext - o.v_ext;
    lb.policy_loss += -s.advantage * logp[s.action] * inv_n;
    lb.entropy += entropy * inv_n;
    lb.value_loss_total += et * et * inv_n;
    lb.value_loss_ext += ee * ee * inv_n;
    if (grad.empty()) continue;
    OutputGrad g;
    const double a_coef = terms.policy ? s.advantage : 0.0;
    const double h_coef = terms.entropy ? cfg.entropy_coef : 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      const double onehot = a == s.action ? 1.0 : 0.0;
      g.logits[a] = (-a_coef * (onehot - probs[a]) + h_coef * probs[a] * (logp[a] + entropy)) * inv_n;
    }
    g.v_total = terms.value_total ? -2.0 * cfg.value_coef * et * inv_n : 0.0;
    g.v_ext = terms.value_ext ? -2.0 * cfg.value_coef * ee * inv_n : 0.0;
    backward(p, *s.obs, cache, g, grad);
  }
  lb.total = (terms.policy ? lb.policy_loss : 0.0) - (terms.entropy ? cfg.entropy_coef * lb.entropy : 0.0) +
             cfg.value_coef * ((terms.value_total ? lb.value_loss_total : 0.0) +
                               (terms.value_ext ? lb.value_loss_ext : 0.0));
  return lb;
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Applies one optimiser step with a precomputed gradient.
inline double apply_gradient(ApproximatorParams& p, std::vector<double>& grad) {
  const auto& cfg = p.config();
  double norm_sq = 0.0;
  for (double g : grad) norm_sq += g * g;
  const double norm = std::sqrt(norm_sq);
  if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
    const double scale = cfg.max_grad_norm / (norm + 1e-6);
    for (double& g : grad) g *= scale;
  }
  auto w = p.weights();
  if (cfg.optimizer == OptimizerKind::SGD) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * grad[i];
  } else {
    auto& sq = p.optimizer_state();
    sq.resize(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      sq[i] = cfg.rmsprop_alpha * sq[i] + (1.0 - cfg.rmsprop_alpha) * grad[i] * grad[i];
      w[i] -= cfg.learning_rate * grad[i] / (std::sqrt(sq[i]) + cfg.rmsprop_eps);
    }
  }
  return norm;
}

/// One A2C step: the policy and total critic learn from reward_total, the
/// extrinsic critic from reward_ext.
inline UpdateDiagnostics a2c_update(ApproximatorParams& p, const Rollout& rollout, double gamma, int n_step) {
  if (rollout.steps.empty()) throw ShapeError("a2c_update: empty rollout");
  if (p.tabular()) {
    for (const RolloutStep& s : rollout.steps) p.ensure_slot(s.obs.data);
  }
  const auto batch = prepare_batch(p, rollout, gamma, n_step);
  std::vector<double> grad(p.weights().size(), 0.0);
  UpdateDiagnostics d;
  d.loss = a2c_loss(p, batch, grad);
  if (!std::isfinite(d.loss.total) || !all_finite(grad)) {
    throw NumericError("a2c_update: non-finite loss (policy " + std::to_string(d.loss.policy_loss) + ", value_total " +
                       std::to_string(d.loss.value_loss_total) + ", value_ext " +
                       std::to_string(d.loss.value_loss_ext) + ", entropy " + std::to_string(d.loss.entropy) + ")");
  }
  d.grad_norm = apply_gradient(p, grad);
  if (!all_finite(p.weights())) throw NumericError("a2c_update: weights became non-finite");
  return d;
}

}  // namespace vcse::agent
