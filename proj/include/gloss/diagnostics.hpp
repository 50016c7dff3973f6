#pragma once

// Comparison of variational draws against reference draws.
//
// Report files (column order is stable):
//   marginals.csv      variant,coordinate,vi_mean,vi_sd,vi_skewness,
//                      oracle_mean,oracle_sd,oracle_skewness
//   derived_sigma.csv  variant,entry,kind,row,col,vi_mean,vi_sd,oracle_mean,oracle_sd
//                      kind is variance, covariance or correlation; row/col are
//                      0-based indices into the random-effect vector
//   ks.csv             variant,coordinate,ks_statistic,p_value
//   elbo_trace.csv     variant,iteration,elbo,elbo_se

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gloss/model.hpp"
#include "gloss/stats.hpp"

namespace gloss {

struct DrawTable {
  std::vector<std::string> labels;
  Matrix<double> draws;  // one row per draw
};

void write_draws(const std::filesystem::path& path, const DrawTable& table);
DrawTable read_draws(const std::filesystem::path& path);

struct MarginalRow {
  std::string variant;
  std::string coordinate;
  Moments vi;
  Moments oracle;
};

struct SigmaRow {
  std::string variant;
  std::string entry;  // e.g. "Sigma_1_0" or "Corr_0_1"
  std::string kind;   // variance | covariance | correlation
  std::size_t row = 0;
  std::size_t col = 0;
  double vi_mean = 0.0;
  double vi_sd = 0.0;
  double oracle_mean = 0.0;
  double oracle_sd = 0.0;
};

struct KsRow {
  std::string variant;
  std::string coordinate;
  KsResult ks;
};

struct TraceRow {
  std::string variant;
  std::size_t iteration = 0;
  double elbo = 0.0;
  double se = 0.0;
};

struct ComparisonReport {
  std::vector<MarginalRow> marginals;
  std::vector<SigmaRow> sigma;
  std::vector<KsRow> ks;
  std::vector<TraceRow> elbo_trace;

  void append(const ComparisonReport& other);
};

/// Random-effect covariance implied by a theta_G draw (nullopt if the model
/// has none).
using SigmaMap = std::function<std::optional<Matrix<double>>(std::span<const double>)>;

class LabelMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Marginal moments and KS statistics per coordinate. When `sigma` is given,
/// each draw's first `global_dim` coordinates are mapped to a covariance
/// matrix whose variances, covariances and correlations are summarized over
/// draws.
ComparisonReport compare(const std::string& variant, const DrawTable& vi,
                         const DrawTable& oracle, const SigmaMap& sigma = {},
                         std::size_t global_dim = 0);

/// Convenience: the model's random_effect_covariance as a SigmaMap.
SigmaMap sigma_map(const HierarchicalModel& model);

void export_report(const ComparisonReport& report, const std::filesystem::path& dir);
ComparisonReport load_report(const std::filesystem::path& dir);

}  // namespace gloss
