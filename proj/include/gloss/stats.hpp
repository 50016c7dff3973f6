#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "gloss/linalg.hpp"

namespace gloss {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;        // divisor n
  double skewness = 0.0;  // m3 / m2^1.5, no small-sample correction; NaN if sd == 0
  bool degenerate = false;
};

/// Throws std::invalid_argument for fewer than `min_count` values.
Moments moments(std::span<const double> x, std::size_t min_count = 1);

/// Autocorrelation-based effective sample size with Geyer's initial positive
/// sequence truncation.
double effective_sample_size(std::span<const double> x);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value and
/// Stephens' small-sample adjustment.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2), clamped to [0, 1].
double kolmogorov_survival(double lambda);

/// Column k of a row-major draw matrix.
std::vector<double> column(const Matrix<double>& draws, std::size_t k);

/// Lower Cholesky factor of a symmetric positive definite matrix; throws
/// std::domain_error when a pivot is not positive.
Matrix<double> cholesky(const Matrix<double>& a);

}  // namespace gloss
