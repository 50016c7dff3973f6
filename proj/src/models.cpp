#include "gloss/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "gloss/csv.hpp"
#include "gloss/rng.hpp"

namespace gloss {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLogistic: return "logistic";
    case ModelKind::kPoisson: return "poisson";
    case ModelKind::kMmnl: return "mmnl";
    case ModelKind::kLinearGaussian: return "linear_gaussian";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "logistic") return ModelKind::kLogistic;
  if (name == "poisson") return ModelKind::kPoisson;
  if (name == "mmnl") return ModelKind::kMmnl;
  if (name == "linear_gaussian") return ModelKind::kLinearGaussian;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

LogisticPrior parse_logistic_prior(const std::string& name) {
  if (name == "normal_theta" || name == "normal") return LogisticPrior::kNormalTheta;
  if (name == "huang_wand" || name == "half_t") return LogisticPrior::kHuangWand;
  throw std::invalid_argument("unknown logistic prior '" + name + "'");
}

ModelKind kind_of(const Dataset& data) {
  struct Visitor {
    ModelKind operator()(const LongitudinalBinaryData&) const { return ModelKind::kLogistic; }
    ModelKind operator()(const LongitudinalCountData&) const { return ModelKind::kPoisson; }
    ModelKind operator()(const PanelChoiceData&) const { return ModelKind::kMmnl; }
    ModelKind operator()(const LinearGaussianData&) const { return ModelKind::kLinearGaussian; }
  };
  return std::visit(Visitor{}, data);
}

namespace {

constexpr double kLogisticPriorVar = 100.0;
constexpr double kPoissonPriorVar = 100.0;
constexpr double kHalfTDof = 2.0;
constexpr double kHalfTScale = 10.0;
constexpr double kAgeCenter = 9.0;

template <class T>
T normal_prior_sum(std::span<const T> x, double variance) {
  T acc(0.0);
  for (const T& v : x) acc += v * v;
  return -0.5 * acc / variance -
         0.5 * static_cast<double>(x.size()) * (kLog2Pi + std::log(variance));
}

// Poisson design: covariates transformed and centered over patients.
struct PoissonDesign {
  double base_mean = 0.0;
  double age_mean = 0.0;
};

PoissonDesign poisson_design(const LongitudinalCountData& data) {
  PoissonDesign design;
  double base_acc = 0.0;
  double age_acc = 0.0;
  for (const auto& group : data.groups) {
    base_acc += std::log(group.front().base / 4.0);
    age_acc += std::log(group.front().age);
  }
  const auto n = static_cast<double>(data.groups.size());
  design.base_mean = base_acc / n;
  design.age_mean = age_acc / n;
  return design;
}

std::array<double, 6> poisson_row(const CountObservation& obs, const PoissonDesign& design) {
  const double base = std::log(obs.base / 4.0) - design.base_mean;
  const double age = std::log(obs.age) - design.age_mean;
  const double visit = (2.0 * obs.visit - 5.0) / 10.0;
  return {1.0, base, obs.trt, base * obs.trt, age, visit};
}

std::array<double, 4> logistic_row(const BinaryObservation& obs) {
  const double age = obs.age - kAgeCenter;
  return {1.0, obs.smoke, age, obs.smoke * age};
}

template <class T>
T dot(std::span<const double> x, std::span<const T> beta) {
  T acc = x[0] * beta[0];
  for (std::size_t k = 1; k < x.size(); ++k) acc += x[k] * beta[k];
  return acc;
}

template <class T>
LowerTriangular<T> cholesky_from_star(std::span<const T> star_coords) {
  return star_inverse(unvech<T>(star_coords));
}

}  // namespace

// ---------------------------------------------------------------- logistic

LogisticMixedModel::LogisticMixedModel(LongitudinalBinaryData data, LogisticPrior prior)
    : prior_(prior) {
  if (data.groups.empty()) throw DataError("logistic model: dataset has no groups");
  for (std::size_t i = 0; i < data.groups.size(); ++i) {
    if (data.groups[i].empty()) {
      throw DataError("logistic model: group " + std::to_string(i) + " is empty");
    }
    std::vector<Row> rows;
    for (const auto& obs : data.groups[i]) {
      if (obs.y != 0 && obs.y != 1) throw DataError("logistic model: responses must be 0/1");
      rows.push_back(Row{logistic_row(obs), obs.y});
    }
    rows_.push_back(std::move(rows));
  }
  sig_ = ModelSignature::uniform(
      rows_.size(), 5, 1,
      {"beta0", "beta_smoke", "beta_age", "beta_smoke_age", "eta"}, {"b0"});
}

template <class T>
T LogisticMixedModel::prior(std::span<const T> theta_g) const {
  if (prior_ == LogisticPrior::kNormalTheta) {
    return normal_prior_sum(theta_g, kLogisticPriorVar);
  }
  // beta ~ N(0, 10^2 I_4); sigma = exp(eta) ~ half-t(2, 10), plus log Jacobian eta.
  const T& eta = theta_g[4];
  const double nu = kHalfTDof;
  const double s = kHalfTScale;
  const double log_norm = std::log(2.0) + std::lgamma((nu + 1.0) / 2.0) -
                          std::lgamma(nu / 2.0) - 0.5 * std::log(nu * std::numbers::pi) -
                          std::log(s);
  const T ratio = exp(2.0 * eta) / (nu * s * s);
  return normal_prior_sum(theta_g.first(4), kLogisticPriorVar) + log_norm -
         0.5 * (nu + 1.0) * log1p(ratio) + eta;
}

template <class T>
T LogisticMixedModel::local(std::size_t i, std::span<const T> b,
                            std::span<const T> theta_g) const {
  const T& eta = theta_g[4];
  const T& bi = b[0];
  T out = prior_ == LogisticPrior::kNormalTheta
              ? -0.5 * kLog2Pi + eta - 0.5 * exp(2.0 * eta) * bi * bi
              : -0.5 * kLog2Pi - eta - 0.5 * bi * bi * exp(-2.0 * eta);
  for (const Row& row : rows_[i]) {
    const T lin = dot<T>(row.x, theta_g.first(4)) + bi;
    const T log_norm = log_sum_exp(T(0.0), lin);
    out += row.y == 1 ? lin - log_norm : -log_norm;
  }
  return out;
}

std::optional<Matrix<double>> LogisticMixedModel::random_effect_covariance(
    std::span<const double> theta_g) const {
  const double eta = theta_g[4];
  Matrix<double> s(1, 1);
  s(0, 0) = prior_ == LogisticPrior::kNormalTheta ? std::exp(-2.0 * eta) : std::exp(2.0 * eta);
  return s;
}

template double LogisticMixedModel::prior<double>(std::span<const double>) const;
template ad::Var LogisticMixedModel::prior<ad::Var>(std::span<const ad::Var>) const;
template double LogisticMixedModel::local<double>(std::size_t, std::span<const double>,
                                                  std::span<const double>) const;
template ad::Var LogisticMixedModel::local<ad::Var>(std::size_t, std::span<const ad::Var>,
                                                    std::span<const ad::Var>) const;

// ----------------------------------------------------------------- poisson

PoissonMixedModel::PoissonMixedModel(LongitudinalCountData data) {
  if (data.groups.empty()) throw DataError("poisson model: dataset has no groups");
  for (std::size_t i = 0; i < data.groups.size(); ++i) {
    if (data.groups[i].empty()) {
      throw DataError("poisson model: patient " + std::to_string(i) + " has no visits");
    }
    for (const auto& obs : data.groups[i]) {
      if (obs.y < 0) throw DataError("poisson model: counts must be non-negative");
      if (!(obs.base > 0.0) || !(obs.age > 0.0)) {
        throw DataError("poisson model: base and age must be positive");
      }
    }
  }
  const PoissonDesign design = poisson_design(data);
  for (const auto& group : data.groups) {
    std::vector<Row> rows;
    for (const auto& obs : group) {
      rows.push_back(Row{poisson_row(obs, design), obs.y, std::lgamma(obs.y + 1.0)});
    }
    rows_.push_back(std::move(rows));
  }
  sig_ = ModelSignature::uniform(
      rows_.size(), 9, 2,
      {"beta0", "beta_base", "beta_trt", "beta_base_trt", "beta_age", "beta_visit",
       "C11*", "C21*", "C22*"},
      {"b0", "b_visit"});
}

template <class T>
T PoissonMixedModel::prior(std::span<const T> theta_g) const {
  return normal_prior_sum(theta_g, kPoissonPriorVar);
}

template <class T>
T PoissonMixedModel::local(std::size_t i, std::span<const T> b,
                           std::span<const T> theta_g) const {
  // b_i ~ N(0, C C^T), C lower triangular with log diagonal in theta_G.
  const auto c = cholesky_from_star<T>(theta_g.subspan(6, 3));
  const auto z = tri_solve<T>(c, b);
  T out = -kLog2Pi - theta_g[6] - theta_g[8] - 0.5 * (z[0] * z[0] + z[1] * z[1]);
  const auto beta = theta_g.first(6);
  for (const Row& row : rows_[i]) {
    const T lin = dot<T>(row.x, beta) + b[0] + row.x[5] * b[1];
    out += static_cast<double>(row.y) * lin - exp(lin) - row.log_y_factorial;
  }
  return out;
}

std::optional<Matrix<double>> PoissonMixedModel::random_effect_covariance(
    std::span<const double> theta_g) const {
  const auto c = cholesky_from_star<double>(theta_g.subspan(6, 3)).dense();
  return multiply(c, transpose(c));
}

template double PoissonMixedModel::prior<double>(std::span<const double>) const;
template ad::Var PoissonMixedModel::prior<ad::Var>(std::span<const ad::Var>) const;
template double PoissonMixedModel::local<double>(std::size_t, std::span<const double>,
                                                 std::span<const double>) const;
template ad::Var PoissonMixedModel::local<ad::Var>(std::size_t, std::span<const ad::Var>,
                                                   std::span<const ad::Var>) const;

// -------------------------------------------------------------------- mmnl

template <class T>
T log_abs_det_cholesky_jacobian(const LowerTriangular<T>& c) {
  const std::size_t d = c.dim();
  const Matrix<double> l = elimination(d);
  Matrix<double> i_plus_k = commutation(d);
  for (std::size_t k = 0; k < d * d; ++k) i_plus_k(k, k) += 1.0;
  const Matrix<T> lhs = cast<double, T>(multiply(l, i_plus_k));
  const Matrix<T> rhs = cast<double, T>(transpose(l));
  const Matrix<T> c_kron = kronecker(c.dense(), Matrix<T>::identity(d));
  const T det = determinant(multiply(multiply(lhs, c_kron), rhs));
  return value(det) > 0.0 ? log(det) : log(-det);
}

template <class T>
T log_wishart_cholesky(const LowerTriangular<T>& c, double dof,
                       std::span<const T> scale_diag) {
  const std::size_t p = c.dim();
  const auto pd = static_cast<double>(p);
  T log_det_omega(0.0);
  T trace(0.0);
  T log_det_scale(0.0);
  for (std::size_t l = 0; l < p; ++l) {
    log_det_omega += 2.0 * log(c.diag(l));
    T omega_ll(0.0);
    for (std::size_t k = 0; k <= l; ++k) omega_ll += c.at(l, k) * c.at(l, k);
    trace += omega_ll / scale_diag[l];
    log_det_scale += log(scale_diag[l]);
  }
  double log_mv_gamma = pd * (pd - 1.0) / 4.0 * std::log(std::numbers::pi);
  for (std::size_t j = 1; j <= p; ++j) {
    log_mv_gamma += std::lgamma(dof / 2.0 + (1.0 - static_cast<double>(j)) / 2.0);
  }
  return 0.5 * (dof - pd - 1.0) * log_det_omega - 0.5 * trace -
         0.5 * dof * pd * kLog2 - 0.5 * dof * log_det_scale - log_mv_gamma;
}

template double log_abs_det_cholesky_jacobian<double>(const LowerTriangular<double>&);
template ad::Var log_abs_det_cholesky_jacobian<ad::Var>(const LowerTriangular<ad::Var>&);
template double log_wishart_cholesky<double>(const LowerTriangular<double>&, double,
                                             std::span<const double>);
template ad::Var log_wishart_cholesky<ad::Var>(const LowerTriangular<ad::Var>&, double,
                                               std::span<const ad::Var>);

MmnlModel::MmnlModel(PanelChoiceData data, MmnlHyper hyper)
    : hyper_(hyper), data_(std::move(data)) {
  if (data_.respondents.empty()) throw DataError("mmnl model: dataset has no respondents");
  for (std::size_t i = 0; i < data_.respondents.size(); ++i) {
    const auto& r = data_.respondents[i];
    if (r.scenarios.empty()) {
      throw DataError("mmnl model: respondent " + std::to_string(i) + " has no scenarios");
    }
    for (const auto& s : r.scenarios) {
      if (s.chosen < 0 || s.chosen >= static_cast<int>(kAlternatives)) {
        throw DataError("mmnl model: chosen alternative out of range");
      }
    }
  }
  sig_ = ModelSignature::uniform(
      data_.respondents.size(), kFixed + tri_size(kRandom) + kRandom, kRandom,
      {"beta_at", "beta_td", "beta_fee", "beta_li_fee", "beta_res_fee", "C11*", "C21*",
       "C31*", "C22*", "C32*", "C33*", "log_a1", "log_a2", "log_a3"},
      {"b_at", "b_td", "b_fee"});
  const Matrix<double> l = elimination(kRandom);
  Matrix<double> i_plus_k = commutation(kRandom);
  for (std::size_t k = 0; k < kRandom * kRandom; ++k) i_plus_k(k, k) += 1.0;
  jacobian_lhs_ = multiply(l, i_plus_k);
  jacobian_rhs_ = transpose(l);
}

template <class T>
T MmnlModel::prior(std::span<const T> theta_g) const {
  constexpr std::size_t p = kRandom;
  const auto c_star = theta_g.subspan(kFixed, tri_size(p));
  const auto log_a = theta_g.subspan(kFixed + tri_size(p), p);
  const auto c = cholesky_from_star<T>(c_star);

  T out = normal_prior_sum(theta_g.first(kFixed), hyper_.beta_variance);

  // Omega | a ~ Wishart(nu + p - 1, diag(1 / (2 nu a_l)))
  std::vector<T> scale;
  scale.reserve(p);
  for (std::size_t l = 0; l < p; ++l) scale.push_back(exp(-log_a[l]) / (2.0 * hyper_.nu));
  out += log_wishart_cholesky<T>(c, hyper_.nu + static_cast<double>(p) - 1.0, scale);

  // Jacobian of vech(C) -> vech(Omega) and of the log-diagonal of C.
  const Matrix<T> c_kron = kronecker(c.dense(), Matrix<T>::identity(p));
  const T det = determinant(multiply(multiply(cast<double, T>(jacobian_lhs_), c_kron),
                                     cast<double, T>(jacobian_rhs_)));
  out += value(det) > 0.0 ? log(det) : log(-det);
  for (std::size_t l = 0; l < p; ++l) out += c_star[tri_index(p, l, l)];

  // a_l ~ Gamma(1/2, rate 1/A^2) with Jacobian a_l.
  const double shape = 0.5;
  const double rate = 1.0 / (hyper_.a_scale * hyper_.a_scale);
  for (std::size_t l = 0; l < p; ++l) {
    const T a = exp(log_a[l]);
    out += log_a[l] + shape * std::log(rate) - std::lgamma(shape) +
           (shape - 1.0) * log_a[l] - rate * a;
  }
  return out;
}

template <class T>
T MmnlModel::local(std::size_t i, std::span<const T> b, std::span<const T> theta_g) const {
  constexpr std::size_t p = kRandom;
  const auto c_star = theta_g.subspan(kFixed, tri_size(p));
  const auto c = cholesky_from_star<T>(c_star);

  // b_i ~ N(0, Omega^{-1}), Omega = C C^T.
  const auto ct_b = tri_multiply<T>(c, b, Side::kTranspose);
  T quad(0.0);
  for (const T& v : ct_b) quad += v * v;
  T out = -0.5 * static_cast<double>(p) * kLog2Pi - 0.5 * quad;
  for (std::size_t l = 0; l < p; ++l) out += c_star[tri_index(p, l, l)];

  const Respondent& r = data_.respondents[i];
  const T coef_at = theta_g[0] + b[0];
  const T coef_td = theta_g[1] + b[1];
  const T coef_fee = theta_g[2] + r.li * theta_g[3] + r.res * theta_g[4] + b[2];
  for (const ChoiceScenario& s : r.scenarios) {
    std::array<T, kAlternatives> u;
    for (std::size_t t = 0; t < kAlternatives; ++t) {
      u[t] = s.at[t] * coef_at + s.td[t] * coef_td + s.fee[t] * coef_fee;
    }
    out += u[static_cast<std::size_t>(s.chosen)] - log_sum_exp(log_sum_exp(u[0], u[1]), u[2]);
  }
  return out;
}

std::optional<Matrix<double>> MmnlModel::random_effect_covariance(
    std::span<const double> theta_g) const {
  constexpr std::size_t p = kRandom;
  const auto c = cholesky_from_star<double>(theta_g.subspan(kFixed, tri_size(p)));
  // Sigma = C^{-T} C^{-1}; column k of C^{-1} solves C x = e_k.
  Matrix<double> c_inv(p, p);
  for (std::size_t k = 0; k < p; ++k) {
    std::vector<double> e(p, 0.0);
    e[k] = 1.0;
    const auto x = tri_solve<double>(c, e);
    for (std::size_t r = 0; r < p; ++r) c_inv(r, k) = x[r];
  }
  return multiply(transpose(c_inv), c_inv);
}

template double MmnlModel::prior<double>(std::span<const double>) const;
template ad::Var MmnlModel::prior<ad::Var>(std::span<const ad::Var>) const;
template double MmnlModel::local<double>(std::size_t, std::span<const double>,
                                         std::span<const double>) const;
template ad::Var MmnlModel::local<ad::Var>(std::size_t, std::span<const ad::Var>,
                                           std::span<const ad::Var>) const;

// --------------------------------------------------------- linear gaussian

LinearGaussianModel::LinearGaussianModel(LinearGaussianData data) : data_(std::move(data)) {
  if (data_.z.empty()) throw DataError("linear-Gaussian model: no groups");
  if (data_.z.size() != data_.y.size()) {
    throw DataError("linear-Gaussian model: one design row per group required");
  }
  const std::size_t d = data_.z.front().size();
  for (std::size_t i = 0; i < data_.z.size(); ++i) {
    if (data_.z[i].size() != d) throw DataError("linear-Gaussian model: ragged design");
  }
  if (!(data_.prior_sd > 0 && data_.local_sd > 0 && data_.noise_sd > 0)) {
    throw DataError("linear-Gaussian model: standard deviations must be positive");
  }
  sig_ = ModelSignature::uniform(data_.z.size(), d, 1, {}, {"b"});
}

template <class T>
T LinearGaussianModel::prior(std::span<const T> theta_g) const {
  return normal_prior_sum(theta_g, data_.prior_sd * data_.prior_sd);
}

template <class T>
T LinearGaussianModel::local(std::size_t i, std::span<const T> b,
                             std::span<const T> theta_g) const {
  const double s2 = data_.local_sd * data_.local_sd;
  const double r2 = data_.noise_sd * data_.noise_sd;
  const T resid = b[0] - dot<T>(data_.z[i], theta_g);
  T out = -0.5 * (kLog2Pi + std::log(s2)) - 0.5 * resid * resid / s2;
  for (double y : data_.y[i]) {
    const T e = y - b[0];
    out += -0.5 * (kLog2Pi + std::log(r2)) - 0.5 * e * e / r2;
  }
  return out;
}

template double LinearGaussianModel::prior<double>(std::span<const double>) const;
template ad::Var LinearGaussianModel::prior<ad::Var>(std::span<const ad::Var>) const;
template double LinearGaussianModel::local<double>(std::size_t, std::span<const double>,
                                                   std::span<const double>) const;
template ad::Var LinearGaussianModel::local<ad::Var>(std::size_t, std::span<const ad::Var>,
                                                     std::span<const ad::Var>) const;

// ----------------------------------------------------------------- factory

std::unique_ptr<HierarchicalModel> make_model(const Dataset& data,
                                              const ModelOptions& options) {
  struct Visitor {
    const ModelOptions& options;
    std::unique_ptr<HierarchicalModel> operator()(const LongitudinalBinaryData& d) const {
      return std::make_unique<LogisticMixedModel>(d, options.logistic_prior);
    }
    std::unique_ptr<HierarchicalModel> operator()(const LongitudinalCountData& d) const {
      return std::make_unique<PoissonMixedModel>(d);
    }
    std::unique_ptr<HierarchicalModel> operator()(const PanelChoiceData& d) const {
      return std::make_unique<MmnlModel>(d, options.mmnl);
    }
    std::unique_ptr<HierarchicalModel> operator()(const LinearGaussianData& d) const {
      return std::make_unique<LinearGaussianModel>(d);
    }
  };
  return std::visit(Visitor{options}, data);
}

// -------------------------------------------------------------- simulation

namespace {

void require_theta(const SimulationSpec& spec, std::size_t d) {
  if (spec.theta_g.size() != d) {
    throw DimensionError("simulate " + to_string(spec.kind) + ": expected " +
                         std::to_string(d) + " global parameters, got " +
                         std::to_string(spec.theta_g.size()));
  }
  if (spec.groups == 0 || spec.obs_per_group == 0) {
    throw DimensionError("simulate: groups and observations per group must be positive");
  }
}

int bernoulli(Stream& rng, double p) { return rng.uniform() < p ? 1 : 0; }

LongitudinalBinaryData simulate_logistic(const SimulationSpec& spec) {
  require_theta(spec, 5);
  Stream rng(spec.seed, 0x10);
  const auto& th = spec.theta_g;
  const double sd = spec.options.logistic_prior == LogisticPrior::kNormalTheta
                        ? std::exp(-th[4])
                        : std::exp(th[4]);
  LongitudinalBinaryData data;
  for (std::size_t i = 0; i < spec.groups; ++i) {
    data.ids.push_back(static_cast<std::int64_t>(i + 1));
    const double smoke = bernoulli(rng, 0.4);
    const double b = sd * rng.normal();
    std::vector<BinaryObservation> group;
    for (std::size_t j = 0; j < spec.obs_per_group; ++j) {
      BinaryObservation obs;
      obs.smoke = smoke;
      obs.age = 7.0 + static_cast<double>(j % 4);
      const auto x = logistic_row(obs);
      const double lin = x[0] * th[0] + x[1] * th[1] + x[2] * th[2] + x[3] * th[3] + b;
      obs.y = bernoulli(rng, sigmoid(lin));
      group.push_back(obs);
    }
    data.groups.push_back(std::move(group));
  }
  return data;
}

LongitudinalCountData simulate_poisson(const SimulationSpec& spec) {
  require_theta(spec, 9);
  Stream rng(spec.seed, 0x20);
  const auto& th = spec.theta_g;
  const auto c = cholesky_from_star<double>(std::span<const double>(th).subspan(6, 3));
  LongitudinalCountData data;
  for (std::size_t i = 0; i < spec.groups; ++i) {
    data.ids.push_back(static_cast<std::int64_t>(i + 1));
    const double base = std::max(1.0, std::round(4.0 * std::exp(1.0 + 0.6 * rng.normal())));
    const double trt = bernoulli(rng, 0.5);
    const double age = 18.0 + std::floor(25.0 * rng.uniform());
    std::vector<CountObservation> group;
    for (std::size_t j = 0; j < spec.obs_per_group; ++j) {
      group.push_back(CountObservation{base, trt, age, static_cast<double>(j + 1), 0});
    }
    data.groups.push_back(std::move(group));
  }
  const PoissonDesign design = poisson_design(data);
  for (auto& group : data.groups) {
    const std::vector<double> z = {rng.normal(), rng.normal()};
    const auto b = tri_multiply<double>(c, z);
    for (auto& obs : group) {
      const auto x = poisson_row(obs, design);
      double lin = b[0] + x[5] * b[1];
      for (std::size_t k = 0; k < 6; ++k) lin += x[k] * th[k];
      std::poisson_distribution<int> pois(std::exp(lin));
      obs.y = pois(rng);
    }
  }
  return data;
}

PanelChoiceData simulate_mmnl(const SimulationSpec& spec) {
  constexpr std::size_t p = MmnlModel::kRandom;
  require_theta(spec, MmnlModel::kFixed + tri_size(p) + p);
  Stream rng(spec.seed, 0x30);
  const auto& th = spec.theta_g;
  const auto c = cholesky_from_star<double>(
      std::span<const double>(th).subspan(MmnlModel::kFixed, tri_size(p)));
  PanelChoiceData data;
  for (std::size_t i = 0; i < spec.groups; ++i) {
    data.ids.push_back(static_cast<std::int64_t>(i + 1));
    Respondent r;
    r.li = bernoulli(rng, 0.3);
    r.res = bernoulli(rng, 0.4);
    // b = C^{-T} z has covariance (C C^T)^{-1}.
    const std::vector<double> z = {rng.normal(), rng.normal(), rng.normal()};
    const auto b = tri_solve<double>(c, z, Side::kTranspose);
    for (std::size_t j = 0; j < spec.obs_per_group; ++j) {
      ChoiceScenario s;
      s.id = static_cast<std::int64_t>(j + 1);
      s.fee = {0.0, 0.5 + rng.uniform(), 1.0 + rng.uniform()};
      for (std::size_t t = 0; t < kAlternatives; ++t) {
        s.at[t] = rng.uniform();
        s.td[t] = rng.uniform();
      }
      std::array<double, kAlternatives> u{};
      double norm = -INFINITY;
      for (std::size_t t = 0; t < kAlternatives; ++t) {
        u[t] = s.at[t] * (th[0] + b[0]) + s.td[t] * (th[1] + b[1]) +
               s.fee[t] * (th[2] + r.li * th[3] + r.res * th[4] + b[2]);
        norm = log_sum_exp(norm, u[t]);
      }
      const double draw = rng.uniform();
      double cum = 0.0;
      s.chosen = static_cast<int>(kAlternatives) - 1;
      for (std::size_t t = 0; t < kAlternatives; ++t) {
        cum += std::exp(u[t] - norm);
        if (draw < cum) {
          s.chosen = static_cast<int>(t);
          break;
        }
      }
      r.scenarios.push_back(s);
    }
    data.respondents.push_back(std::move(r));
  }
  return data;
}

LinearGaussianData simulate_linear_gaussian(const SimulationSpec& spec) {
  if (spec.theta_g.empty()) throw DimensionError("simulate linear_gaussian: empty theta_g");
  if (spec.groups == 0 || spec.obs_per_group == 0) {
    throw DimensionError("simulate: groups and observations per group must be positive");
  }
  Stream rng(spec.seed, 0x40);
  const std::size_t d = spec.theta_g.size();
  LinearGaussianData data;
  data.prior_sd = spec.prior_sd;
  data.local_sd = spec.local_sd;
  data.noise_sd = spec.noise_sd;
  for (std::size_t i = 0; i < spec.groups; ++i) {
    std::vector<double> z(d, 1.0);
    for (std::size_t k = 1; k < d; ++k) z[k] = rng.normal();
    double mean = 0.0;
    for (std::size_t k = 0; k < d; ++k) mean += z[k] * spec.theta_g[k];
    const double b = mean + spec.local_sd * rng.normal();
    std::vector<double> y;
    for (std::size_t j = 0; j < spec.obs_per_group; ++j) {
      y.push_back(b + spec.noise_sd * rng.normal());
    }
    data.z.push_back(std::move(z));
    data.y.push_back(std::move(y));
  }
  return data;
}

}  // namespace

Dataset simulate(const SimulationSpec& spec) {
  switch (spec.kind) {
    case ModelKind::kLogistic: return simulate_logistic(spec);
    case ModelKind::kPoisson: return simulate_poisson(spec);
    case ModelKind::kMmnl: return simulate_mmnl(spec);
    case ModelKind::kLinearGaussian: return simulate_linear_gaussian(spec);
  }
  throw std::invalid_argument("simulate: unknown model kind");
}

// --------------------------------------------------------------------- csv

namespace {

const std::vector<std::string> kLogisticColumns = {"group", "smoke", "age", "y"};
const std::vector<std::string> kPoissonColumns = {"patient", "base", "trt",
                                                  "age",     "visit", "y"};
const std::vector<std::string> kMmnlColumns = {"resp", "scenario", "alt", "at", "td",
                                               "fee",  "li",       "res", "chosen"};

csv::Table read_table(const std::filesystem::path& path,
                      const std::vector<std::string>& columns) {
  if (!std::filesystem::exists(path)) {
    throw DataError("data file '" + path.string() + "' does not exist");
  }
  csv::Table table;
  try {
    table = csv::read(path);
  } catch (const csv::CsvError& e) {
    throw DataError(e.what());
  }
  if (table.header != columns) {
    std::string expected;
    for (const auto& c : columns) expected += (expected.empty() ? "" : ",") + c;
    throw DataError(path.string() + ": line 1: header must be '" + expected + "'");
  }
  if (table.rows.empty()) throw DataError(path.string() + ": dataset is empty");
  return table;
}

std::string row_error(const std::filesystem::path& path, const csv::Row& row,
                      const std::string& msg) {
  return path.string() + ": line " + std::to_string(row.line) + ": " + msg;
}

template <class F>
void wrap_csv(F&& f) {
  try {
    f();
  } catch (const csv::CsvError& e) {
    throw DataError(e.what());
  }
}

LongitudinalBinaryData load_logistic(const std::filesystem::path& path) {
  const auto table = read_table(path, kLogisticColumns);
  LongitudinalBinaryData data;
  std::map<std::int64_t, std::size_t> index;
  wrap_csv([&] {
    for (const auto& row : table.rows) {
      const auto id = csv::parse_integer(row, 0, "group");
      BinaryObservation obs;
      obs.smoke = csv::parse_double(row, 1, "smoke");
      obs.age = csv::parse_double(row, 2, "age");
      const auto y = csv::parse_integer(row, 3, "y");
      if (y != 0 && y != 1) throw DataError(row_error(path, row, "y must be 0 or 1"));
      obs.y = static_cast<int>(y);
      auto [it, inserted] = index.emplace(id, data.groups.size());
      if (inserted) {
        data.ids.push_back(id);
        data.groups.emplace_back();
      }
      data.groups[it->second].push_back(obs);
    }
  });
  return data;
}

LongitudinalCountData load_poisson(const std::filesystem::path& path) {
  const auto table = read_table(path, kPoissonColumns);
  LongitudinalCountData data;
  std::map<std::int64_t, std::size_t> index;
  wrap_csv([&] {
    for (const auto& row : table.rows) {
      const auto id = csv::parse_integer(row, 0, "patient");
      CountObservation obs;
      obs.base = csv::parse_double(row, 1, "base");
      obs.trt = csv::parse_double(row, 2, "trt");
      obs.age = csv::parse_double(row, 3, "age");
      obs.visit = csv::parse_double(row, 4, "visit");
      const auto y = csv::parse_integer(row, 5, "y");
      if (y < 0) throw DataError(row_error(path, row, "y must be a non-negative count"));
      if (!(obs.base > 0.0)) throw DataError(row_error(path, row, "base must be positive"));
      if (!(obs.age > 0.0)) throw DataError(row_error(path, row, "age must be positive"));
      obs.y = static_cast<int>(y);
      auto [it, inserted] = index.emplace(id, data.groups.size());
      if (inserted) {
        data.ids.push_back(id);
        data.groups.emplace_back();
      }
      data.groups[it->second].push_back(obs);
    }
  });
  return data;
}

PanelChoiceData load_mmnl(const std::filesystem::path& path) {
  const auto table = read_table(path, kMmnlColumns);
  PanelChoiceData data;
  std::map<std::int64_t, std::size_t> resp_index;
  // Per respondent: scenario id -> position in its scenario list, and which
  // alternatives have been seen.
  std::vector<std::map<std::int64_t, std::size_t>> scenario_index;
  std::vector<std::vector<std::array<int, kAlternatives>>> seen;
  std::vector<std::vector<int>> chosen_count;
  std::vector<std::vector<std::size_t>> first_line;
  wrap_csv([&] {
    for (const auto& row : table.rows) {
      const auto resp = csv::parse_integer(row, 0, "resp");
      const auto scen = csv::parse_integer(row, 1, "scenario");
      const auto alt = csv::parse_integer(row, 2, "alt");
      if (alt < 1 || alt > static_cast<long long>(kAlternatives)) {
        throw DataError(row_error(path, row, "alt must be 1, 2 or 3"));
      }
      const auto chosen = csv::parse_integer(row, 8, "chosen");
      if (chosen != 0 && chosen != 1) {
        throw DataError(row_error(path, row, "chosen must be 0 or 1"));
      }
      const double li = csv::parse_double(row, 6, "li");
      const double res = csv::parse_double(row, 7, "res");
      auto [rit, new_resp] = resp_index.emplace(resp, data.respondents.size());
      if (new_resp) {
        data.ids.push_back(resp);
        data.respondents.push_back(Respondent{li, res, {}});
        scenario_index.emplace_back();
        seen.emplace_back();
        chosen_count.emplace_back();
        first_line.emplace_back();
      }
      const std::size_t r = rit->second;
      Respondent& respondent = data.respondents[r];
      if (respondent.li != li || respondent.res != res) {
        throw DataError(row_error(path, row, "li/res must be constant within a respondent"));
      }
      auto [sit, new_scen] = scenario_index[r].emplace(scen, respondent.scenarios.size());
      if (new_scen) {
        ChoiceScenario s;
        s.id = scen;
        s.chosen = -1;
        respondent.scenarios.push_back(s);
        seen[r].push_back({0, 0, 0});
        chosen_count[r].push_back(0);
        first_line[r].push_back(row.line);
      }
      const std::size_t s_pos = sit->second;
      const auto t = static_cast<std::size_t>(alt - 1);
      if (seen[r][s_pos][t]++) {
        throw DataError(row_error(path, row, "alternative listed twice in a scenario"));
      }
      ChoiceScenario& s = respondent.scenarios[s_pos];
      s.at[t] = csv::parse_double(row, 3, "at");
      s.td[t] = csv::parse_double(row, 4, "td");
      s.fee[t] = csv::parse_double(row, 5, "fee");
      if (chosen == 1) {
        s.chosen = static_cast<int>(t);
        ++chosen_count[r][s_pos];
      }
    }
  });
  for (std::size_t r = 0; r < data.respondents.size(); ++r) {
    for (std::size_t s = 0; s < data.respondents[r].scenarios.size(); ++s) {
      const std::string where = path.string() + ": line " + std::to_string(first_line[r][s]);
      for (int count : seen[r][s]) {
        if (count != 1) throw DataError(where + ": scenario must list all three alternatives");
      }
      if (chosen_count[r][s] != 1) {
        throw DataError(where + ": scenario must have exactly one chosen alternative");
      }
    }
  }
  return data;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, ModelKind kind) {
  switch (kind) {
    case ModelKind::kLogistic: return load_logistic(path);
    case ModelKind::kPoisson: return load_poisson(path);
    case ModelKind::kMmnl: return load_mmnl(path);
    case ModelKind::kLinearGaussian:
      throw DataError("linear_gaussian data has no CSV format; use a simulate block");
  }
  throw std::invalid_argument("load_csv: unknown model kind");
}

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  using csv::format;
  if (const auto* d = std::get_if<LongitudinalBinaryData>(&data)) {
    csv::write_row(out, kLogisticColumns);
    for (std::size_t i = 0; i < d->groups.size(); ++i)
      for (const auto& o : d->groups[i])
        csv::write_row(out, {std::to_string(d->ids[i]), format(o.smoke), format(o.age),
                             std::to_string(o.y)});
  } else if (const auto* d = std::get_if<LongitudinalCountData>(&data)) {
    csv::write_row(out, kPoissonColumns);
    for (std::size_t i = 0; i < d->groups.size(); ++i)
      for (const auto& o : d->groups[i])
        csv::write_row(out, {std::to_string(d->ids[i]), format(o.base), format(o.trt),
                             format(o.age), format(o.visit), std::to_string(o.y)});
  } else if (const auto* d = std::get_if<PanelChoiceData>(&data)) {
    csv::write_row(out, kMmnlColumns);
    for (std::size_t i = 0; i < d->respondents.size(); ++i) {
      const Respondent& r = d->respondents[i];
      for (const auto& s : r.scenarios)
        for (std::size_t t = 0; t < kAlternatives; ++t)
          csv::write_row(out, {std::to_string(d->ids[i]), std::to_string(s.id),
                               std::to_string(t + 1), format(s.at[t]), format(s.td[t]),
                               format(s.fee[t]), format(r.li), format(r.res),
                               s.chosen == static_cast<int>(t) ? "1" : "0"});
    }
  } else {
    throw DataError("linear_gaussian data has no CSV format");
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace gloss
