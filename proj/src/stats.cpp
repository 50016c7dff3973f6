#include "gloss/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gloss {

Moments moments(std::span<const double> x, std::size_t min_count) {
  if (x.size() < std::max<std::size_t>(min_count, 1)) {
    throw std::invalid_argument("moments: need at least " + std::to_string(min_count) +
                                " values, got " + std::to_string(x.size()));
  }
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : x) {
    const double e = v - mean;
    m2 += e * e;
    m3 += e * e * e;
  }
  m2 /= n;
  m3 /= n;
  Moments m;
  m.mean = mean;
  m.sd = std::sqrt(m2);
  m.degenerate = !(m2 > 0.0);
  m.skewness = m.degenerate ? std::numeric_limits<double>::quiet_NaN() : m3 / std::pow(m2, 1.5);
  return m;
}

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(x.begin(), x.end());
  for (double& v : c) v -= mean;
  auto autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) acc += c[t] * c[t + lag];
    return acc / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return static_cast<double>(n);

  // Sum of consecutive pairs Gamma_m = rho_2m + rho_2m+1 while positive,
  // forced non-increasing.
  double sum = 0.0;
  double prev = INFINITY;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double gamma = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
    if (!(gamma > 0.0)) break;
    gamma = std::min(gamma, prev);
    prev = gamma;
    sum += gamma;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(n) + 10));
  return static_cast<double>(n) / tau;
}

double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto n = static_cast<double>(x.size());
  const auto m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double en = std::sqrt(n * m / (n + m));
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
  return r;
}

std::vector<double> column(const Matrix<double>& draws, std::size_t k) {
  std::vector<double> out(draws.rows());
  for (std::size_t r = 0; r < draws.rows(); ++r) out[r] = draws(r, k);
  return out;
}

Matrix<double> cholesky(const Matrix<double>& a) {
  if (!a.square()) throw DimensionError("cholesky: matrix must be square");
  const std::size_t n = a.rows();
  Matrix<double> l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw std::domain_error("cholesky: matrix is not positive definite");
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / l(j, j);
    }
  }
  return l;
}

}  // namespace gloss
