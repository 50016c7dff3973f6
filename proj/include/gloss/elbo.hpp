#pragma once

// ELBO with the reflection indicators integrated out.
//
// For fixed noise the draw can land on 2 global branches (theta~ and its
// mirror) and, within each, 2 points per group. Each point's weight is the
// probability that the rejection-free sampler ends there, so the expectation
// over the uniforms is a finite weighted sum of log h - log q terms.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gloss/skew.hpp"

namespace gloss {

struct BranchWeights {
  std::vector<double> global;              // probability of each global branch
  std::vector<std::vector<double>> local;  // per branch: w(b_i) at b~_i
};

template <class T>
T elbo_marginalized(const HierarchicalModel& model, const VariationalParams<T>& p,
                    const VariantSpec& variant, const Noise& noise,
                    BranchWeights* weights = nullptr);

struct ElboSample {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d lambda, zero on frozen blocks
  Noise noise;
  BranchWeights weights;
};

/// kTotal differentiates elbo_marginalized as written. kPath holds lambda
/// fixed inside log q and keeps only its dependence through the draw and the
/// branch weights; the dropped score term has zero mean, so both are unbiased,
/// and kPath has zero variance when q matches the posterior exactly.
enum class GradientEstimator { kTotal, kPath };

GradientEstimator parse_gradient_estimator(const std::string& name);
std::string to_string(GradientEstimator estimator);

ElboSample elbo_gradient(const HierarchicalModel& model, const ParamLayout& layout,
                         std::span<const double> lambda, const VariantSpec& variant,
                         const Noise& noise,
                         GradientEstimator estimator = GradientEstimator::kTotal);

/// log h(theta) - log q(theta) at the point the sampler reaches with the
/// given noise and uniforms; its average over uniforms is elbo_marginalized.
double indicator_integrand(const HierarchicalModel& model, const VariationalParams<double>& p,
                           const VariantSpec& variant, const Noise& noise,
                           const Uniforms& uniforms);

struct ElboEstimate {
  double mean = 0.0;
  double se = 0.0;  // NaN for a single sample
  std::size_t samples = 0;
};

/// Average of elbo_marginalized over draws 0..samples-1 of the seed's noise.
ElboEstimate elbo_estimate(const HierarchicalModel& model, const VariationalParams<double>& p,
                           const VariantSpec& variant, std::size_t samples,
                           std::uint64_t seed);

}  // namespace gloss
