#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "evfuse/error.hpp"

namespace evfuse::special {

namespace detail {

inline void require_positive(double x, const char* fn) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

}  // namespace detail

/// ln Gamma(x) for x > 0.
///
/// Small arguments are shifted up with Gamma(x+1) = x Gamma(x) until x >= 15, where the
/// Stirling series truncated after the x^-15 term is accurate to well below one ulp.
inline double lgamma(double x) {
  detail::require_positive(x, "lgamma");
  if (x == 1.0 || x == 2.0) return 0.0;

  double shift = 1.0;
  while (x < 15.0) {
    shift *= x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // B_{2n} / (2n (2n-1)), n = 1..8
  const double series =
      inv * (1.0 / 12.0 +
             inv2 * (-1.0 / 360.0 +
                     inv2 * (1.0 / 1260.0 +
                             inv2 * (-1.0 / 1680.0 +
                                     inv2 * (1.0 / 1188.0 +
                                             inv2 * (-691.0 / 360360.0 +
                                                     inv2 * (1.0 / 156.0 +
                                                             inv2 * (-3617.0 / 122400.0))))))));
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  return (x - 0.5) * std::log(x) - x + half_log_two_pi + series - std::log(shift);
}

/// psi(x) = d/dx ln Gamma(x) for x > 0. Recurrence shift to x >= 6, then the asymptotic series.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 - inv2 * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

/// psi'(x), needed for gradients through digamma.
inline double trigamma(double x) {
  detail::require_positive(x, "trigamma");
  double acc = 0.0;
  while (x < 10.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * (1.0 + inv * (0.5 +
                          inv * (1.0 / 6.0 +
                                 inv2 * (-1.0 / 30.0 +
                                         inv2 * (1.0 / 42.0 +
                                                 inv2 * (-1.0 / 30.0 +
                                                         inv2 * (5.0 / 66.0 +
                                                                 inv2 * (-691.0 / 2730.0 +
                                                                         inv2 * (7.0 / 6.0)))))))));
  return acc + series;
}

/// ln(1 + e^x) without overflow. Requires finite x.
inline double softplus(double x) {
  if (!std::isfinite(x)) throw DomainError("softplus: non-finite input");
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Logistic sigmoid, the derivative of softplus.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace evfuse::special
