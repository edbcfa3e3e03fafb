#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vcse/entropy/knn.hpp"
#include "vcse/entropy/special.hpp"
#include "vcse/error.hpp"

namespace vcse::entropy {

/// Floor applied to any kNN length before taking its log. Revisited states
/// in a gridworld produce exact zero distances.
inline constexpr double kDistanceFloor = 1e-12;

struct EntropyEstimate {
  double nats = 0.0;
  std::size_t k = 0;
  std::size_t n = 0;
  std::size_t floored = 0;  // samples whose kNN length hit kDistanceFloor
};

/// Which radius the marginal neighbour count n_x(i) uses.
///   Projected: eps_x(i), the x-projection of the joint kNN distance.
///   Joint:     eps(i), the joint max-norm kNN distance.
enum class CountWindow { Projected, Joint };

/// Which block of a (coords, value) sample a marginal refers to.
enum class MarginalChannel { Value, State };

namespace detail {

struct FlooredLog {
  std::size_t floored = 0;
  double operator()(double length) {
    if (length < kDistanceFloor) {
      ++floored;
      return std::log(kDistanceFloor);
    }
    return std::log(length);
  }
};

inline void check_estimator_args(std::span<const Sample> batch, std::size_t k, bool need_values) {
  validate_batch(batch);
  if (k < 1) throw DomainError("estimator: k must be >= 1");
  if (batch.size() <= k) throw DomainError("estimator: batch size must exceed k");
  if (need_values && !batch.front().value.has_value()) {
    throw DomainError("estimator: samples must carry values");
  }
  for (const Sample& s : batch) {
    for (double c : s.coords) {
      if (!std::isfinite(c)) throw DomainError("estimator: non-finite coordinate");
    }
    if (s.value && !std::isfinite(*s.value)) throw DomainError("estimator: non-finite value");
  }
}

// Per-sample pieces of the KSG construction with x = value, y = coords.
struct KsgTerms {
  std::vector<KnnResult> joint;
  std::vector<double> eps_value;  // 2 |v_i - v_kNN|
  std::vector<double> eps_state;  // 2 ||s_i - s_kNN||
};

inline KsgTerms ksg_terms(std::span<const Sample> batch, std::size_t k) {
  KsgTerms t;
  t.joint = knn_all(batch, k, NormKind::Maximum);
  t.eps_value.resize(batch.size());
  t.eps_state.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& nb = batch[t.joint[i].neighbor_index];
    t.eps_value[i] = 2.0 * std::abs(*batch[i].value - *nb.value);
    t.eps_state[i] = 2.0 * coord_distance(batch[i].coords, nb.coords, NormKind::Euclidean);
  }
  return t;
}

inline std::size_t count_within_state(std::span<const Sample> batch, std::size_t center, double eps) {
  const double radius = 0.5 * eps;
  std::size_t n = 0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (j == center) continue;
    if (coord_distance(batch[j].coords, batch[center].coords, NormKind::Euclidean) < radius) ++n;
  }
  return n;
}

}  // namespace detail

/// Number of other entries whose value lies in the open window
/// (v_center - eps_v/2, v_center + eps_v/2).
inline std::size_t count_within(std::span<const double> values, std::size_t center, double eps_v) {
  if (center >= values.size()) throw DomainError("count_within: center out of range");
  if (!(eps_v >= 0.0)) throw DomainError("count_within: eps_v must be >= 0");
  const double radius = 0.5 * eps_v;
  const double c = values[center];
  std::size_t n = 0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (j != center && std::abs(values[j] - c) < radius) ++n;
  }
  return n;
}

/// Kozachenko-Leonenko estimate of H(X) over sample coords.
inline EntropyEstimate kl_entropy(std::span<const Sample> batch, std::size_t k, NormKind norm) {
  detail::check_estimator_args(batch, k, false);
  const std::size_t n = batch.size();
  const int d = static_cast<int>(batch.front().coords.size());

  std::vector<Sample> coords_only;
  std::span<const Sample> view = batch;
  if (batch.front().value.has_value()) {
    coords_only.reserve(n);
    for (const Sample& s : batch) coords_only.push_back(Sample{s.coords, std::nullopt});
    view = coords_only;
  }

  detail::FlooredLog flog;
  double sum_log = 0.0;
  for (const KnnResult& r : knn_all(view, k, norm)) sum_log += flog(r.distance);

  const double nd = static_cast<double>(n);
  EntropyEstimate est;
  est.k = k;
  est.n = n;
  est.floored = flog.floored;
  est.nats = -digamma(static_cast<double>(k)) + digamma(nd) + log_unit_ball_volume(d, norm) +
             static_cast<double>(d) / nd * sum_log;
  return est;
}

/// KSG estimate of the joint entropy H(value, coords).
inline EntropyEstimate ksg_joint_entropy(std::span<const Sample> batch, std::size_t k) {
  detail::check_estimator_args(batch, k, true);
  const std::size_t n = batch.size();
  const int d_state = static_cast<int>(batch.front().coords.size());
  const auto joint = knn_all(batch, k, NormKind::Maximum);

  detail::FlooredLog flog;
  double sum_log = 0.0;
  for (const KnnResult& r : joint) sum_log += flog(r.distance);

  const double nd = static_cast<double>(n);
  EntropyEstimate est{0.0, k, n, flog.floored};
  est.nats = -digamma(static_cast<double>(k)) + digamma(nd) +
             log_unit_ball_volume(1, NormKind::Euclidean) +
             log_unit_ball_volume(d_state, NormKind::Euclidean) +
             static_cast<double>(d_state + 1) / nd * sum_log;
  return est;
}

/// KSG estimate of a marginal entropy, H(value) or H(coords), with the
/// marginal scale taken from the joint kNN.
inline EntropyEstimate ksg_marginal_entropy(std::span<const Sample> batch, std::size_t k,
                                            MarginalChannel channel = MarginalChannel::Value,
                                            CountWindow window = CountWindow::Projected) {
  detail::check_estimator_args(batch, k, true);
  const std::size_t n = batch.size();
  const auto terms = detail::ksg_terms(batch, k);
  const bool on_value = channel == MarginalChannel::Value;
  const int d = on_value ? 1 : static_cast<int>(batch.front().coords.size());

  std::vector<double> values;
  if (on_value) {
    values.reserve(n);
    for (const Sample& s : batch) values.push_back(*s.value);
  }

  detail::FlooredLog flog;
  double sum_psi = 0.0;
  double sum_log = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps_x = on_value ? terms.eps_value[i] : terms.eps_state[i];
    const double radius_eps = window == CountWindow::Projected ? eps_x : terms.joint[i].eps;
    const std::size_t nx = on_value ? count_within(values, i, radius_eps)
                                    : detail::count_within_state(batch, i, radius_eps);
    sum_psi += digamma(static_cast<double>(nx) + 1.0);
    sum_log += flog(0.5 * radius_eps);
  }

  const double nd = static_cast<double>(n);
  EntropyEstimate est{0.0, k, n, flog.floored};
  est.nats = -sum_psi / nd + digamma(nd) + log_unit_ball_volume(d, NormKind::Euclidean) +
             static_cast<double>(d) / nd * sum_log;
  return est;
}

/// KSG estimate of H(coords | value), the closed form
///   -psi(k) + <psi(n_v + 1)> + log c_dS + d_S <log(eps / 2)>.
inline EntropyEstimate ksg_conditional_entropy(std::span<const Sample> batch, std::size_t k,
                                               CountWindow window = CountWindow::Joint) {
  detail::check_estimator_args(batch, k, true);
  const std::size_t n = batch.size();
  const int d_state = static_cast<int>(batch.front().coords.size());
  const auto terms = detail::ksg_terms(batch, k);

  std::vector<double> values;
  values.reserve(n);
  for (const Sample& s : batch) values.push_back(*s.value);

  detail::FlooredLog flog;
  double sum_psi = 0.0;
  double sum_log = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double radius_eps = window == CountWindow::Projected ? terms.eps_value[i] : terms.joint[i].eps;
    sum_psi += digamma(static_cast<double>(count_within(values, i, radius_eps)) + 1.0);
    sum_log += flog(terms.joint[i].distance);
  }

  const double nd = static_cast<double>(n);
  EntropyEstimate est{0.0, k, n, flog.floored};
  est.nats = -digamma(static_cast<double>(k)) + sum_psi / nd +
             log_unit_ball_volume(d_state, NormKind::Euclidean) +
             static_cast<double>(d_state) / nd * sum_log;
  return est;
}

/// Closed-form conditional estimate next to joint-minus-marginal, computed
/// with the same counting window. The two agree when window == Joint; with
/// Projected they differ by d_V <log eps - log eps_v>.
struct ChainRuleGap {
  double closed_form = 0.0;
  double joint_minus_marginal = 0.0;
  double gap() const { return joint_minus_marginal - closed_form; }
};

inline ChainRuleGap ksg_chain_rule_gap(std::span<const Sample> batch, std::size_t k,
                                       CountWindow window = CountWindow::Projected) {
  const double joint = ksg_joint_entropy(batch, k).nats;
  const double marginal = ksg_marginal_entropy(batch, k, MarginalChannel::Value, window).nats;
  return ChainRuleGap{ksg_conditional_entropy(batch, k, window).nats, joint - marginal};
}

}  // namespace vcse::entropy
