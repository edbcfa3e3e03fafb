#pragma once

// Shared fixtures and brute-force oracles for the test suites. The oracles
// are written independently of the library: full sorts instead of partial
// selection, their own distance code, no shared helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "vcse/entropy/knn.hpp"
#include "vcse/entropy/special.hpp"

namespace vcse::testing {

using entropy::NormKind;
using entropy::Sample;

inline std::vector<Sample> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t d, bool with_value,
                                        double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.coords.resize(d);
    for (auto& c : s.coords) c = g(rng);
    if (with_value) s.value = g(rng);
  }
  return out;
}

// Coordinates on a small integer lattice, so exact ties are common.
inline std::vector<Sample> lattice_batch(std::mt19937_64& rng, std::size_t n, std::size_t d, bool with_value) {
  std::uniform_int_distribution<int> u(0, 4);
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.coords.resize(d);
    for (auto& c : s.coords) c = u(rng);
    if (with_value) s.value = u(rng) * 0.5;
  }
  return out;
}

inline double oracle_distance(const Sample& a, const Sample& b, NormKind norm) {
  double sq = 0.0, mx = 0.0;
  for (std::size_t j = 0; j < a.coords.size(); ++j) {
    const double diff = a.coords[j] - b.coords[j];
    sq += diff * diff;
    mx = std::max(mx, std::fabs(diff));
  }
  const double dv = a.value ? std::fabs(*a.value - *b.value) : 0.0;
  if (norm == NormKind::Euclidean) return std::sqrt(sq + dv * dv);
  if (a.value) return std::max(std::sqrt(sq), dv);
  return mx;
}

struct OracleNeighbor {
  std::size_t index;
  double distance;
};

// k-th nearest neighbour by sorting every (distance, index) pair.
inline OracleNeighbor oracle_knn(const std::vector<Sample>& batch, std::size_t query, std::size_t k, NormKind norm) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (j != query) all.emplace_back(oracle_distance(batch[query], batch[j], norm), j);
  }
  std::sort(all.begin(), all.end());
  return {all[k - 1].second, all[k - 1].first};
}

inline double oracle_digamma(double x) {
  // Not a library path: integer/half-integer closed forms only.
  constexpr double gamma = 0.57721566490153286061;
  double r = -gamma;
  if (x == std::floor(x)) {
    for (int i = 1; i < static_cast<int>(x); ++i) r += 1.0 / i;
    return r;
  }
  throw std::logic_error("oracle_digamma: integers only");
}

inline std::vector<double> oracle_se(const std::vector<Sample>& states, std::size_t k) {
  std::vector<Sample> plain = states;
  for (auto& s : plain) s.value.reset();
  std::vector<double> out;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    out.push_back(std::log(2.0 * oracle_knn(plain, i, k, NormKind::Euclidean).distance + 1.0));
  }
  return out;
}

inline std::vector<double> oracle_vcse(const std::vector<Sample>& states, const std::vector<double>& values,
                                       std::size_t k) {
  std::vector<Sample> joint = states;
  for (std::size_t i = 0; i < joint.size(); ++i) joint[i].value = values[i];
  const double d = static_cast<double>(states.front().coords.size());
  std::vector<double> out;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const auto nb = oracle_knn(joint, i, k, NormKind::Maximum);
    double sq = 0.0;
    for (std::size_t j = 0; j < states[i].coords.size(); ++j) {
      const double diff = states[i].coords[j] - states[nb.index].coords[j];
      sq += diff * diff;
    }
    const double eps_s = 2.0 * std::sqrt(sq);
    const double eps_v = 2.0 * std::fabs(values[i] - values[nb.index]);
    int n_v = 0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (j != i && std::fabs(values[j] - values[i]) < eps_v / 2.0) ++n_v;
    }
    const double eps = std::max(std::max(eps_s, eps_v), 1e-12);
    out.push_back(oracle_digamma(n_v + 1.0) / d + std::log(eps));
  }
  return out;
}

inline std::vector<std::size_t> argsort(const std::vector<double>& xs) {
  std::vector<std::size_t> idx(xs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  return idx;
}

}  // namespace vcse::testing
