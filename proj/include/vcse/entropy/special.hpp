#pragma once

#include <cmath>
#include <numbers>

#include "vcse/error.hpp"

namespace vcse::entropy {

enum class NormKind { Euclidean, Maximum };

/// Digamma function psi(x) for x > 0.
///
/// Shifts the argument above 10 with psi(x) = psi(x + 1) - 1/x, then applies
/// the asymptotic expansion
///   psi(x) ~ ln x - 1/(2x) - sum_n B_2n / (2n x^2n).
/// Absolute error is below 1e-13 for x >= 1.
inline double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("digamma: argument must be positive and finite");
  }
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // B2/2, B4/4, ..., B14/14
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 - inv2 * (1.0 / 12.0)))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

/// log of the volume of the radius-1 ball in d dimensions under `norm`.
inline double log_unit_ball_volume(int d, NormKind norm) {
  if (d < 1) throw DomainError("log_unit_ball_volume: dimension must be >= 1");
  const double dd = static_cast<double>(d);
  if (norm == NormKind::Maximum) return dd * std::numbers::ln2;
  return 0.5 * dd * std::log(std::numbers::pi) - std::lgamma(1.0 + 0.5 * dd);
}

}  // namespace vcse::entropy
