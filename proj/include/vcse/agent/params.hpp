#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vcse/error.hpp"
#include "vcse/gridworld/env.hpp"
#include "vcse/rng.hpp"

namespace vcse::agent {

using gridworld::kNumActions;
using gridworld::ObsMode;
using gridworld::Observation;

enum class ApproximatorKind { Tabular, TinyMLP };
enum class OptimizerKind { SGD, RMSprop };
// How the extrinsic critic f_v is attached. SharedTrunkStopGrad reads the
// policy trunk's features through a stop-gradient; SeparateNetwork owns a
// trunk of its own.
enum class ExtrinsicHead { SharedTrunkStopGrad, SeparateNetwork };

struct AgentConfig {
  ApproximatorKind kind = ApproximatorKind::TinyMLP;
  std::vector<int> hidden = {64};
  double learning_rate = 7e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double gamma = 0.99;
  int n_step = 5;
  double max_grad_norm = 0.5;  // 0 disables clipping
  OptimizerKind optimizer = OptimizerKind::RMSprop;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-5;
  ExtrinsicHead extrinsic_head = ExtrinsicHead::SharedTrunkStopGrad;
  std::uint64_t init_seed = 0;

  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

struct PolicyOutput {
  std::array<double, kNumActions> action_logits{};
  double v_ext = 0.0;
  double v_total = 0.0;
};

inline std::array<double, kNumActions> softmax(const std::array<double, kNumActions>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumActions> p{};
  double z = 0.0;
  for (int a = 0; a < kNumActions; ++a) z += (p[a] = std::exp(logits[a] - m));
  for (double& x : p) x /= z;
  return p;
}

inline std::array<double, kNumActions> log_softmax(const std::array<double, kNumActions>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double lz = m + std::log(z);
  std::array<double, kNumActions> out{};
  for (int a = 0; a < kNumActions; ++a) out[a] = logits[a] - lz;
  return out;
}

/// Gradient of a scalar loss with respect to one forward pass's outputs.
struct OutputGrad {
  std::array<double, kNumActions> logits{};
  double v_total = 0.0;
  double v_ext = 0.0;
};

/// Policy, total critic and extrinsic critic parameters, stored flat.
///
/// TinyMLP layout: tanh trunk layers, then a policy head (6), total-critic
/// head (1) and extrinsic-critic head (1). Dense weights are stored
/// input-major (w[in * out_size + out]) so one-hot inputs touch one row.
///
/// Tabular layout: one 8-slot block per distinct observation, holding
/// [logits(6), v_total, v_ext]. Unseen observations read as zeros.
class ApproximatorParams {
 public:
  static constexpr std::size_t kTabularSlot = kNumActions + 2;

  struct Layer {
    std::size_t in = 0, out = 0;
    std::size_t w = 0, b = 0;  // offsets into weights
  };

  ApproximatorParams() = default;

  ApproximatorParams(AgentConfig config, ObsMode mode, std::size_t input_size)
      : config_(std::move(config)), mode_(mode), input_size_(input_size) {
    if (input_size_ == 0) throw ShapeError("approximator input size must be positive");
    if (config_.kind == ApproximatorKind::Tabular) {
      if (mode == ObsMode::PartialGrid) {
        throw ShapeError("tabular approximator requires FullOneHot or AgentXY observations");
      }
      return;
    }
    if (config_.hidden.empty()) throw ShapeError("TinyMLP needs at least one hidden layer");
    for (int h : config_.hidden) {
      if (h <= 0) throw ShapeError("hidden sizes must be positive");
    }
    build_mlp();
    initialise();
  }

  const AgentConfig& config() const { return config_; }
  ObsMode obs_mode() const { return mode_; }
  std::size_t input_size() const { return input_size_; }
  bool tabular() const { return config_.kind == ApproximatorKind::Tabular; }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }
  std::vector<double>& optimizer_state() { return opt_state_; }
  const std::vector<double>& optimizer_state() const { return opt_state_; }

  const std::vector<Layer>& trunk() const { return trunk_; }
  const std::vector<Layer>& ext_trunk() const { return ext_trunk_; }
  const Layer& policy_head() const { return policy_head_; }
  const Layer& total_head() const { return total_head_; }
  const Layer& ext_head() const { return ext_head_; }

  // --- tabular storage ---------------------------------------------------

  /// Compact key of an observation: (index, value) pairs of its nonzeros.
  static std::string table_key(std::span<const double> obs) {
    std::string key;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (obs[i] == 0.0) continue;
      const auto idx = static_cast<std::uint32_t>(i);
      char buf[sizeof idx + sizeof(double)];
      std::memcpy(buf, &idx, sizeof idx);
      std::memcpy(buf + sizeof idx, &obs[i], sizeof(double));
      key.append(buf, sizeof buf);
    }
    return key;
  }

  /// Offset of an observation's slot, or npos when it has none.
  std::size_t find_slot(std::span<const double> obs) const {
    const auto it = table_.find(table_key(obs));
    return it == table_.end() ? npos : it->second;
  }

  /// Offset of an observation's slot, allocating a zeroed one if needed.
  std::size_t ensure_slot(std::span<const double> obs) {
    auto [it, inserted] = table_.try_emplace(table_key(obs), weights_.size());
    if (inserted) {
      weights_.resize(weights_.size() + kTabularSlot, 0.0);
      if (!opt_state_.empty() || config_.optimizer == OptimizerKind::RMSprop) {
        opt_state_.resize(weights_.size(), 0.0);
      }
      slot_order_.push_back(it->first);
    }
    return it->second;
  }

  const std::vector<std::string>& table_keys() const { return slot_order_; }

  /// Rebuilds a tabular parameter set from serialised parts.
  void restore_table(const std::vector<std::string>& keys, std::vector<double> weights, std::vector<double> opt) {
    if (weights.size() != keys.size() * kTabularSlot) throw ShapeError("tabular checkpoint size mismatch");
    table_.clear();
    slot_order_ = keys;
    for (std::size_t i = 0; i < keys.size(); ++i) table_.emplace(keys[i], i * kTabularSlot);
    weights_ = std::move(weights);
    opt_state_ = std::move(opt);
  }

  void restore_dense(std::vector<double> weights, std::vector<double> opt) {
    if (weights.size() != weights_.size()) throw ShapeError("dense checkpoint size mismatch");
    weights_ = std::move(weights);
    opt_state_ = std::move(opt);
  }

  friend bool operator==(const ApproximatorParams& a, const ApproximatorParams& b) {
    return a.config_ == b.config_ && a.mode_ == b.mode_ && a.input_size_ == b.input_size_ &&
           a.weights_ == b.weights_ && a.opt_state_ == b.opt_state_ && a.slot_order_ == b.slot_order_;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  Layer add_layer(std::size_t in, std::size_t out) {
    Layer l{in, out, weights_.size(), weights_.size() + in * out};
    weights_.resize(weights_.size() + in * out + out, 0.0);
    return l;
  }

  void build_mlp() {
    std::size_t in = input_size_;
    for (int h : config_.hidden) {
      trunk_.push_back(add_layer(in, static_cast<std::size_t>(h)));
      in = static_cast<std::size_t>(h);
    }
    const std::size_t features = in;
    policy_head_ = add_layer(features, kNumActions);
    total_head_ = add_layer(features, 1);
    if (config_.extrinsic_head == ExtrinsicHead::SeparateNetwork) {
      std::size_t ein = input_size_;
      for (int h : config_.hidden) {
        ext_trunk_.push_back(add_layer(ein, static_cast<std::size_t>(h)));
        ein = static_cast<std::size_t>(h);
      }
    }
    ext_head_ = add_layer(features, 1);
    if (config_.optimizer == OptimizerKind::RMSprop) opt_state_.assign(weights_.size(), 0.0);
  }

  void initialise() {
    Rng rng(config_.init_seed);
    auto fill = [&](const Layer& l, double gain) {
      const double bound = gain * std::sqrt(6.0 / static_cast<double>(l.in + l.out));
      for (std::size_t i = 0; i < l.in * l.out; ++i) weights_[l.w + i] = bound * (2.0 * uniform01(rng) - 1.0);
    };
    for (const Layer& l : trunk_) fill(l, 1.0);
    for (const Layer& l : ext_trunk_) fill(l, 1.0);
    fill(policy_head_, 0.01);
    fill(total_head_, 1.0);
    fill(ext_head_, 1.0);
  }

  AgentConfig config_;
  ObsMode mode_ = ObsMode::FullOneHot;
  std::size_t input_size_ = 0;
  std::vector<double> weights_;
  std::vector<double> opt_state_;
  std::vector<Layer> trunk_, ext_trunk_;
  Layer policy_head_, total_head_, ext_head_;
  std::map<std::string, std::size_t> table_;
  std::vector<std::string> slot_order_;
};

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Activations kept from a forward pass for backprop.
struct ForwardCache {
  std::vector<std::vector<double>> trunk;      // post-tanh output of each trunk layer
  std::vector<std::vector<double>> ext_trunk;  // same for a separate extrinsic trunk
  std::size_t slot = ApproximatorParams::npos; // tabular slot
};

namespace detail {

inline void dense_forward(std::span<const double> w, const ApproximatorParams::Layer& l, std::span<const double> x,
                          std::vector<double>& y) {
  y.assign(w.begin() + static_cast<std::ptrdiff_t>(l.b), w.begin() + static_cast<std::ptrdiff_t>(l.b + l.out));
  for (std::size_t i = 0; i < l.in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w.data() + l.w + i * l.out;
    for (std::size_t o = 0; o < l.out; ++o) y[o] += xi * row[o];
  }
}

// Accumulates parameter gradients of a dense layer and, if dx is non-null,
// the gradient with respect to its input.
inline void dense_backward(std::span<const double> w, const ApproximatorParams::Layer& l, std::span<const double> x,
                           std::span<const double> dy, std::span<double> grad, std::vector<double>* dx) {
  for (std::size_t o = 0; o < l.out; ++o) grad[l.b + o] += dy[o];
  if (dx) dx->assign(l.in, 0.0);
  for (std::size_t i = 0; i < l.in; ++i) {
    const double xi = x[i];
    const double* row = w.data() + l.w + i * l.out;
    double* grow = grad.data() + l.w + i * l.out;
    if (xi != 0.0) {
      for (std::size_t o = 0; o < l.out; ++o) grow[o] += xi * dy[o];
    }
    if (dx) {
      double acc = 0.0;
      for (std::size_t o = 0; o < l.out; ++o) acc += row[o] * dy[o];
      (*dx)[i] = acc;
    }
  }
}

inline void run_trunk(std::span<const double> w, const std::vector<ApproximatorParams::Layer>& layers,
                      std::span<const double> x, std::vector<std::vector<double>>& acts) {
  acts.resize(layers.size());
  std::span<const double> in = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    dense_forward(w, layers[l], in, acts[l]);
    for (double& v : acts[l]) v = std::tanh(v);
    in = acts[l];
  }
}

// Backprop through a tanh trunk given the gradient on its final output.
inline void trunk_backward(std::span<const double> w, const std::vector<ApproximatorParams::Layer>& layers,
                           std::span<const double> x, const std::vector<std::vector<double>>& acts,
                           std::vector<double> dout, std::span<double> grad) {
  std::vector<double> dx;
  for (std::size_t l = layers.size(); l-- > 0;) {
    for (std::size_t o = 0; o < dout.size(); ++o) dout[o] *= 1.0 - acts[l][o] * acts[l][o];
    std::span<const double> in = l == 0 ? x : std::span<const double>(acts[l - 1]);
    dense_backward(w, layers[l], in, dout, grad, l == 0 ? nullptr : &dx);
    if (l > 0) dout = dx;
  }
}

}  // namespace detail

inline void check_obs(const ApproximatorParams& p, const Observation& obs) {
  if (obs.mode != p.obs_mode()) throw ShapeError("observation mode does not match the approximator");
  if (obs.data.size() != p.input_size()) throw ShapeError("observation length does not match the approximator");
}

/// Forward pass; deterministic in (params, obs).
inline PolicyOutput forward(const ApproximatorParams& p, const Observation& obs, ForwardCache* cache = nullptr) {
  check_obs(p, obs);
  PolicyOutput out;
  const auto w = p.weights();
  if (p.tabular()) {
    const std::size_t slot = p.find_slot(obs.data);
    if (cache) cache->slot = slot;
    if (slot == ApproximatorParams::npos) return out;
    for (int a = 0; a < kNumActions; ++a) out.action_logits[a] = w[slot + a];
    out.v_total = w[slot + kNumActions];
    out.v_ext = w[slot + kNumActions + 1];
    return out;
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  detail::run_trunk(w, p.trunk(), obs.data, c.trunk);
  const std::vector<double>& features = c.trunk.back();
  std::vector<double> y;
  detail::dense_forward(w, p.policy_head(), features, y);
  std::copy(y.begin(), y.end(), out.action_logits.begin());
  detail::dense_forward(w, p.total_head(), features, y);
  out.v_total = y[0];
  if (p.ext_trunk().empty()) {
    detail::dense_forward(w, p.ext_head(), features, y);
  } else {
    detail::run_trunk(w, p.ext_trunk(), obs.data, c.ext_trunk);
    detail::dense_forward(w, p.ext_head(), c.ext_trunk.back(), y);
  }
  out.v_ext = y[0];
  return out;
}

/// Accumulates d(loss)/d(weights) for one forward pass into `grad`. The
/// extrinsic-critic gradient stops at the head's input when the trunk is
/// shared. Tabular params must already own a slot for the observation.
inline void backward(const ApproximatorParams& p, const Observation& obs, const ForwardCache& cache,
                     const OutputGrad& g, std::span<double> grad) {
  const auto w = p.weights();
  if (p.tabular()) {
    if (cache.slot == ApproximatorParams::npos) throw ShapeError("tabular backward needs an allocated slot");
    for (int a = 0; a < kNumActions; ++a) grad[cache.slot + a] += g.logits[a];
    grad[cache.slot + kNumActions] += g.v_total;
    grad[cache.slot + kNumActions + 1] += g.v_ext;
    return;
  }
  const std::vector<double>& features = cache.trunk.back();
  std::vector<double> dfeat, tmp;
  detail::dense_backward(w, p.policy_head(), features, g.logits, grad, &dfeat);
  const std::array<double, 1> dvt{g.v_total};
  detail::dense_backward(w, p.total_head(), features, dvt, grad, &tmp);
  for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] += tmp[i];
  const std::array<double, 1> dve{g.v_ext};
  if (p.ext_trunk().empty()) {
    detail::dense_backward(w, p.ext_head(), features, dve, grad, nullptr);
  } else {
    detail::dense_backward(w, p.ext_head(), cache.ext_trunk.back(), dve, grad, &tmp);
    detail::trunk_backward(w, p.ext_trunk(), obs.data, cache.ext_trunk, tmp, grad);
  }
  detail::trunk_backward(w, p.trunk(), obs.data, cache.trunk, dfeat, grad);
}

/// Samples an action from softmax(logits) by inverse CDF.
inline int sample_action(const std::array<double, kNumActions>& logits, Rng& rng) {
  const auto probs = softmax(logits);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int a = 0; a < kNumActions - 1; ++a) {
    acc += probs[a];
    if (u < acc) return a;
  }
  return kNumActions - 1;
}

inline int act(const ApproximatorParams& p, const Observation& obs, Rng& rng) {
  return sample_action(forward(p, obs).action_logits, rng);
}

/// Most likely action, lowest index on ties.
inline int greedy_action(const ApproximatorParams& p, const Observation& obs) {
  const auto logits = forward(p, obs).action_logits;
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace vcse::agent
