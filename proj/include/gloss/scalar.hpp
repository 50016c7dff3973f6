#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace gloss {

// Unqualified math calls inside gloss resolve to these for double and to the
// ad:: overloads (via ADL) for ad::Var, so generic code is written once.
using std::exp;
using std::log;
using std::log1p;
using std::lgamma;
using std::pow;
using std::sqrt;
using std::tanh;

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kLog2 = std::numbers::ln2;

inline double value(double x) { return x; }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity() &&
      b == -std::numeric_limits<double>::infinity()) {
    return a;
  }
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log(sigmoid(x)) without forming sigmoid(x).
inline double log_sigmoid(double x) { return -log_sum_exp(0.0, -x); }

/// Digamma for x > 0: upward recurrence to x >= 10, then the asymptotic
/// series. Absolute error below 1e-12 on the positive axis.
inline double digamma(double x) {
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // B2/2, B4/4, ... Bernoulli terms
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 - inv2 * 691.0 / 32760)))));
  return acc + std::log(x) - 0.5 * inv - series;
}

}  // namespace gloss
