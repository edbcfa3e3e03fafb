#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vcse/entropy/special.hpp"
#include "vcse/error.hpp"

namespace vcse::entropy {

/// A point handed to the estimators: a state vector and, for conditional
/// estimates, the scalar it is conditioned on.
struct Sample {
  std::vector<double> coords;
  std::optional<double> value;
};

struct KnnResult {
  std::size_t neighbor_index = 0;
  double distance = 0.0;
  double eps = 0.0;  // always 2 * distance
};

/// Checks the batch-level invariants of Sample and returns the coordinate
/// dimension.
inline std::size_t validate_batch(std::span<const Sample> batch) {
  if (batch.empty()) throw DomainError("empty sample batch");
  const std::size_t dim = batch.front().coords.size();
  const bool has_value = batch.front().value.has_value();
  for (const Sample& s : batch) {
    if (s.coords.size() != dim) throw ShapeError("samples disagree on coordinate dimension");
    if (s.value.has_value() != has_value) {
      throw ShapeError("value must be present on all samples or on none");
    }
  }
  return dim;
}

/// Distance between coordinate vectors. Euclidean is L2; Maximum is Chebyshev.
inline double coord_distance(std::span<const double> a, std::span<const double> b, NormKind norm) {
  if (norm == NormKind::Maximum) {
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
    return m;
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Distance between two samples.
///
/// Without values this is coord_distance. With values the state and value
/// blocks are measured separately: Maximum gives max(||s - s'||_2, |v - v'|),
/// Euclidean gives the L2 norm over the concatenated vector.
inline double sample_distance(const Sample& a, const Sample& b, NormKind norm) {
  if (!a.value.has_value()) return coord_distance(a.coords, b.coords, norm);
  const double dv = std::abs(*a.value - *b.value);
  if (norm == NormKind::Maximum) {
    return std::max(coord_distance(a.coords, b.coords, NormKind::Euclidean), dv);
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < a.coords.size(); ++j) {
    const double d = a.coords[j] - b.coords[j];
    acc += d * d;
  }
  return std::sqrt(acc + dv * dv);
}

namespace detail {

inline KnnResult knn_unchecked(std::span<const Sample> batch, std::size_t query, std::size_t k,
                               NormKind norm, std::vector<std::pair<double, std::size_t>>& scratch) {
  scratch.clear();
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (j == query) continue;
    scratch.emplace_back(sample_distance(batch[query], batch[j], norm), j);
  }
  // (distance, index) is a strict total order, so ties resolve to the lower index.
  auto kth = scratch.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(scratch.begin(), kth, scratch.end());
  return KnnResult{kth->second, kth->first, 2.0 * kth->first};
}

inline void check_knn_args(std::size_t n, std::size_t query, std::size_t k) {
  if (k < 1) throw DomainError("knn: k must be >= 1");
  if (k >= n) throw DomainError("knn: k must be smaller than the batch size");
  if (query >= n) throw DomainError("knn: query index out of range");
}

}  // namespace detail

/// k-th nearest neighbour of batch[query], excluding the query itself.
inline KnnResult knn(std::span<const Sample> batch, std::size_t query, std::size_t k, NormKind norm) {
  validate_batch(batch);
  detail::check_knn_args(batch.size(), query, k);
  std::vector<std::pair<double, std::size_t>> scratch;
  scratch.reserve(batch.size());
  return detail::knn_unchecked(batch, query, k, norm, scratch);
}

/// knn for every sample in the batch.
inline std::vector<KnnResult> knn_all(std::span<const Sample> batch, std::size_t k, NormKind norm) {
  validate_batch(batch);
  detail::check_knn_args(batch.size(), 0, k);
  std::vector<std::pair<double, std::size_t>> scratch;
  scratch.reserve(batch.size());
  std::vector<KnnResult> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.push_back(detail::knn_unchecked(batch, i, k, norm, scratch));
  }
  return out;
}

}  // namespace vcse::entropy
