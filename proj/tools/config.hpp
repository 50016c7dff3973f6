#pragma once

// Experiment configuration read from TOML.
//
//   [model]     kind, prior (logistic only), csv (path relative to the file)
//   [simulate]  groups, obs_per_group, theta_g, seed,
//               prior_sd, local_sd, noise_sd (linear_gaussian only)
//   [fit]       variants, iterations, learning_rate, seed, monitor_stride,
//               monitor_samples, samples_per_step, restarts, draws, threads,
//               gradient ("total" | "path"), warm_start
//   [mcmc]      iterations, burn_in, thin, seed, target_accept,
//               adapt_window, chains
//   [output]    dir (relative to the file)
//
// Exactly one of model.csv and [simulate] must be given. Unknown tables and
// keys are errors.

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gloss/mcmc.hpp"
#include "gloss/models.hpp"
#include "gloss/train.hpp"

namespace gloss::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  ModelKind kind = ModelKind::kLogistic;
  ModelOptions options;
  std::optional<std::filesystem::path> csv;
  std::optional<SimulationSpec> simulate;

  std::vector<VariantSpec> variants = ladder();
  TrainConfig train;
  std::size_t draws = 10000;  // saved per fitted variant

  McmcConfig mcmc;

  std::filesystem::path output_dir = "runs/default";
  std::string origin = "<string>";  // file name used in diagnostics
};

/// `base_dir` resolves relative paths in the file.
ExperimentConfig parse_config(std::string_view text, const std::string& origin = "<string>",
                              const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& config);

std::unique_ptr<HierarchicalModel> build_model(const ExperimentConfig& config);

}  // namespace gloss::cli
