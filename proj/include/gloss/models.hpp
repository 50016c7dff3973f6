#pragma once

// Bundled hierarchical models, their simulators and CSV loaders.
//
// Datasets hold covariates exactly as they appear in the CSV files; each
// model derives its design from the raw values once, at construction:
//
//   logistic  age_c   = age - 9                  (ages are recorded in years)
//   poisson   base_c  = log(base / 4) - mean      (base: 8-week seizure count)
//             age_c   = log(age) - mean           (age in years)
//             visit_c = (2 * visit - 5) / 10      (visit index 1..4)
//   mmnl      attributes are used as recorded
//
// Means are taken over patients, so the coding is a fixed function of the
// dataset and is shared by every variational family fitted to it.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gloss/model.hpp"

namespace gloss {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { kLogistic, kPoisson, kMmnl, kLinearGaussian };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct BinaryObservation {
  double smoke = 0.0;
  double age = 0.0;
  int y = 0;
};

struct LongitudinalBinaryData {
  std::vector<std::int64_t> ids;
  std::vector<std::vector<BinaryObservation>> groups;
};

struct CountObservation {
  double base = 0.0;
  double trt = 0.0;
  double age = 0.0;
  double visit = 0.0;
  int y = 0;
};

struct LongitudinalCountData {
  std::vector<std::int64_t> ids;
  std::vector<std::vector<CountObservation>> groups;
};

inline constexpr std::size_t kAlternatives = 3;  // FSP, PSP, PUP

struct ChoiceScenario {
  std::int64_t id = 0;
  std::array<double, kAlternatives> at{};
  std::array<double, kAlternatives> td{};
  std::array<double, kAlternatives> fee{};
  int chosen = 0;  // 0-based alternative index
};

struct Respondent {
  double li = 0.0;
  double res = 0.0;
  std::vector<ChoiceScenario> scenarios;
};

struct PanelChoiceData {
  std::vector<std::int64_t> ids;
  std::vector<Respondent> respondents;
};

/// Conjugate toy: theta_G ~ N(0, prior_sd^2 I_d), b_i | theta_G ~
/// N(z_i' theta_G, local_sd^2), y_ij | b_i ~ N(b_i, noise_sd^2). Every
/// density keeps its normalizing constant so the ELBO is comparable to the
/// exact log evidence.
struct LinearGaussianData {
  double prior_sd = 1.0;
  double local_sd = 1.0;
  double noise_sd = 1.0;
  std::vector<std::vector<double>> z;  // per group, length d
  std::vector<std::vector<double>> y;  // per group
};

using Dataset = std::variant<LongitudinalBinaryData, LongitudinalCountData,
                             PanelChoiceData, LinearGaussianData>;

ModelKind kind_of(const Dataset& data);

enum class LogisticPrior { kNormalTheta, kHuangWand };

LogisticPrior parse_logistic_prior(const std::string& name);

class LogisticMixedModel final : public ModelBase<LogisticMixedModel> {
 public:
  LogisticMixedModel(LongitudinalBinaryData data, LogisticPrior prior);

  const ModelSignature& signature() const override { return sig_; }
  std::string kind() const override { return "logistic"; }
  std::optional<Matrix<double>> random_effect_covariance(
      std::span<const double> theta_g) const override;

  LogisticPrior prior_kind() const { return prior_; }

  template <class T>
  T prior(std::span<const T> theta_g) const;
  template <class T>
  T local(std::size_t i, std::span<const T> b, std::span<const T> theta_g) const;

 private:
  struct Row {
    std::array<double, 4> x;
    int y;
  };
  ModelSignature sig_;
  LogisticPrior prior_;
  std::vector<std::vector<Row>> rows_;
};

class PoissonMixedModel final : public ModelBase<PoissonMixedModel> {
 public:
  explicit PoissonMixedModel(LongitudinalCountData data);

  const ModelSignature& signature() const override { return sig_; }
  std::string kind() const override { return "poisson"; }
  std::optional<Matrix<double>> random_effect_covariance(
      std::span<const double> theta_g) const override;

  template <class T>
  T prior(std::span<const T> theta_g) const;
  template <class T>
  T local(std::size_t i, std::span<const T> b, std::span<const T> theta_g) const;

 private:
  struct Row {
    std::array<double, 6> x;  // 1, base, trt, base*trt, age, visit
    int y;
    double log_y_factorial;
  };
  ModelSignature sig_;
  std::vector<std::vector<Row>> rows_;
};

struct MmnlHyper {
  double beta_variance = 1e6;  // sigma^2
  double nu = 2.0;
  double a_scale = 1e3;  // A
};

class MmnlModel final : public ModelBase<MmnlModel> {
 public:
  static constexpr std::size_t kFixed = 5;
  static constexpr std::size_t kRandom = 3;

  explicit MmnlModel(PanelChoiceData data, MmnlHyper hyper = {});

  const ModelSignature& signature() const override { return sig_; }
  std::string kind() const override { return "mmnl"; }
  std::optional<Matrix<double>> random_effect_covariance(
      std::span<const double> theta_g) const override;

  const MmnlHyper& hyper() const { return hyper_; }

  template <class T>
  T prior(std::span<const T> theta_g) const;
  template <class T>
  T local(std::size_t i, std::span<const T> b, std::span<const T> theta_g) const;

 private:
  ModelSignature sig_;
  MmnlHyper hyper_;
  PanelChoiceData data_;
  Matrix<double> jacobian_lhs_;  // L (I + K)
  Matrix<double> jacobian_rhs_;  // L^T
};

class LinearGaussianModel final : public ModelBase<LinearGaussianModel> {
 public:
  explicit LinearGaussianModel(LinearGaussianData data);

  const ModelSignature& signature() const override { return sig_; }
  std::string kind() const override { return "linear_gaussian"; }
  const LinearGaussianData& data() const { return data_; }

  template <class T>
  T prior(std::span<const T> theta_g) const;
  template <class T>
  T local(std::size_t i, std::span<const T> b, std::span<const T> theta_g) const;

 private:
  ModelSignature sig_;
  LinearGaussianData data_;
};

/// log |det(L (I + K) (C kron I) L^T)| for a lower-triangular C, the
/// Jacobian of vech(C) -> vech(C C^T). Exposed for testing.
template <class T>
T log_abs_det_cholesky_jacobian(const LowerTriangular<T>& c);

/// log density of a Wishart(dof, diag(scale_diag)) matrix Omega = C C^T given
/// its Cholesky factor C.
template <class T>
T log_wishart_cholesky(const LowerTriangular<T>& c, double dof,
                       std::span<const T> scale_diag);

struct ModelOptions {
  LogisticPrior logistic_prior = LogisticPrior::kNormalTheta;
  MmnlHyper mmnl{};
};

std::unique_ptr<HierarchicalModel> make_model(const Dataset& data,
                                              const ModelOptions& options = {});

struct SimulationSpec {
  ModelKind kind = ModelKind::kLogistic;
  std::size_t groups = 20;
  std::size_t obs_per_group = 4;  // observations, visits or scenarios
  std::vector<double> theta_g;    // true global parameters
  std::uint64_t seed = 1;
  ModelOptions options{};
  // Linear-Gaussian toy only.
  double prior_sd = 1.0;
  double local_sd = 1.0;
  double noise_sd = 1.0;
};

/// Draws a dataset from the model's own generative process. Deterministic
/// given the spec.
Dataset simulate(const SimulationSpec& spec);

/// Loads a dataset; the header row must list exactly the model's columns:
///   logistic  group,smoke,age,y
///   poisson   patient,base,trt,age,visit,y
///   mmnl      resp,scenario,alt,at,td,fee,li,res,chosen   (alt in 1..3)
Dataset load_csv(const std::filesystem::path& path, ModelKind kind);

void export_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace gloss
