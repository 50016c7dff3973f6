#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gloss/elbo.hpp"

namespace gloss {

struct TrainConfig {
  std::size_t iterations = 150000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::size_t monitor_stride = 1000;  // 0 disables the trace
  std::size_t monitor_samples = 20;
  std::size_t samples_per_step = 1;
  std::size_t max_retries = 5;
  double clip = 100.0;                // infinity-norm bound on the gradient
  std::size_t restarts = 1;
  std::size_t threads = 0;            // 0: GLOSS_THREADS or hardware
  bool record_steps = false;          // keep the per-step single-draw ELBO
  GradientEstimator gradient = GradientEstimator::kTotal;
  bool warm_start = false;            // learned skew: start from the fitted unskewed base

  void validate() const;
};

/// Worker cap: `requested` if nonzero, else GLOSS_THREADS, else the hardware
/// concurrency.
std::size_t worker_count(std::size_t requested = 0);

struct TracePoint {
  std::size_t iteration = 0;
  double elbo = 0.0;
  double se = 0.0;
};

struct FitResult {
  VariantSpec variant;  // family the result describes
  VariantSpec fitted;   // family whose ELBO was optimized
  ParamLayout layout;
  std::vector<double> lambda;
  std::vector<TracePoint> trace;
  std::vector<double> step_elbo;
  double seconds = 0.0;
  std::size_t retried_steps = 0;
  TrainConfig config;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// mu_G, m_i ~ N(0, 0.01^2); every other block zero, so T_G = T_i = I.
std::vector<double> init_params(const HierarchicalModel& model, const VariantSpec& variant,
                                std::uint64_t seed);

/// Adam ascent on the variant's objective. A post-hoc variant fits its base
/// and returns the base lambda viewed under the correction.
FitResult fit(const HierarchicalModel& model, const VariantSpec& variant,
              const TrainConfig& config);

/// Fits the unskewed `base` once and returns it followed by one result per
/// post-hoc view. The views share lambda; their traces evaluate the view's
/// ELBO at the same checkpoints.
std::vector<FitResult> fit_with_views(const HierarchicalModel& model, const VariantSpec& base,
                                      const std::vector<VariantSpec>& views,
                                      const TrainConfig& config);

/// Fits every requested variant, sharing base fits between a base and its
/// post-hoc corrections. Independent fits run concurrently up to the worker
/// cap. Results follow the order of `variants`.
std::vector<FitResult> run_ladder(const HierarchicalModel& model, const TrainConfig& config,
                                  const std::vector<VariantSpec>& variants = ladder());

/// Writes fit.json, lambda.bin and elbo_trace.csv into `dir`.
void save_fit(const FitResult& result, const std::string& model_kind,
              const std::filesystem::path& dir);

}  // namespace gloss
