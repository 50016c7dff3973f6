#pragma once

// Adaptive random-walk Metropolis over the full unconstrained theta, used as
// the reference posterior at desk scale.
//
// During burn-in the proposal is s * L z with z standard normal, where log s
// follows a Robbins-Monro recursion toward the target acceptance rate and L is
// the Cholesky factor of the running burn-in covariance (refreshed once per
// adaptation window). Both are frozen after burn-in, so retained draws come
// from a fixed Metropolis kernel.

#include <cstdint>
#include <string>
#include <vector>

#include "gloss/model.hpp"
#include "gloss/stats.hpp"

namespace gloss {

struct McmcConfig {
  std::size_t iterations = 200000;  // including burn-in
  std::size_t burn_in = 50000;
  std::size_t thin = 10;
  double target_accept = 0.234;
  std::size_t adapt_window = 500;
  std::uint64_t seed = 1;
  std::size_t chains = 1;

  void validate() const;
};

struct ChainOutput {
  std::vector<std::string> labels;
  Matrix<double> draws;                  // retained draws, one row each
  std::vector<double> acceptance_trace;  // acceptance rate per window
  std::vector<double> ess;               // per coordinate
  std::vector<double> scale_trace;       // proposal scale per window
  double acceptance_rate = 0.0;          // after burn-in
  double final_scale = 0.0;
  std::vector<std::string> warnings;
};

ChainOutput run_mcmc(const HierarchicalModel& model, const McmcConfig& config,
                     std::vector<double> init = {});

/// config.chains independent chains (seeds derived from config.seed) run
/// concurrently and concatenated in chain order; ESS values are summed.
ChainOutput run_chains(const HierarchicalModel& model, const McmcConfig& config);

/// Per-coordinate moments; throws std::invalid_argument below 10 draws.
std::vector<Moments> summarize(const Matrix<double>& draws);

}  // namespace gloss
