#pragma once

// Small datasets and parameter builders shared by the test binaries.

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "gloss/models.hpp"
#include "gloss/rng.hpp"
#include "gloss/variational.hpp"
#include "oracles.hpp"

namespace fixtures {

inline gloss::LinearGaussianData conjugate_data(std::size_t groups = 6, std::size_t d = 2,
                                                std::uint64_t seed = 3) {
  gloss::SimulationSpec spec;
  spec.kind = gloss::ModelKind::kLinearGaussian;
  spec.groups = groups;
  spec.obs_per_group = 4;
  spec.theta_g.assign(d, 0.5);
  spec.seed = seed;
  spec.prior_sd = 1.5;
  spec.local_sd = 0.8;
  spec.noise_sd = 1.0;
  return std::get<gloss::LinearGaussianData>(gloss::simulate(spec));
}

inline oracle::ConjugatePosterior conjugate_oracle(const gloss::LinearGaussianData& data) {
  return oracle::conjugate_posterior(data.z, data.y, data.prior_sd, data.local_sd,
                                     data.noise_sd);
}

/// The G-VA lambda that reproduces the exact conjugate posterior.
inline std::vector<double> conjugate_lambda(const gloss::ParamLayout& layout,
                                            const oracle::ConjugatePosterior& post) {
  std::vector<double> lambda(layout.size(), 0.0);
  const std::size_t d = layout.global_dim();
  for (std::size_t k = 0; k < d; ++k) lambda[layout.mu_g_offset() + k] = post.mu_g[k];
  // vech(T_G*), column-major lower triangle with logged diagonal
  std::size_t at = layout.t_g_offset();
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = j; i < d; ++i)
      lambda[at++] = i == j ? std::log(post.t_g[i][j]) : post.t_g[i][j];
  for (std::size_t g = 0; g < layout.groups(); ++g) {
    lambda[layout.m_offset(g)] = post.m[g];
    for (std::size_t k = 0; k < d; ++k) lambda[layout.t_gi_offset(g) + k] = post.t_gi[g][k];
    lambda[layout.f_offset(g)] = std::log(post.t_i[g]);
  }
  return lambda;
}

/// Random lambda with moderate scales; frozen coordinates stay zero.
inline std::vector<double> random_lambda(const gloss::ParamLayout& layout, std::uint64_t seed,
                                         double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  const auto mask = layout.free_mask();
  std::vector<double> lambda(layout.size(), 0.0);
  for (std::size_t k = 0; k < lambda.size(); ++k)
    if (mask[k]) lambda[k] = z(rng);
  return lambda;
}

inline std::unique_ptr<gloss::HierarchicalModel> small_model(gloss::ModelKind kind,
                                                             std::size_t groups = 2,
                                                             std::size_t obs = 4,
                                                             std::uint64_t seed = 11) {
  gloss::SimulationSpec spec;
  spec.kind = kind;
  spec.groups = groups;
  spec.obs_per_group = obs;
  spec.seed = seed;
  switch (kind) {
    case gloss::ModelKind::kLogistic: spec.theta_g = {-1.0, 0.3, 0.5, -0.1, 0.0}; break;
    case gloss::ModelKind::kPoisson:
      spec.theta_g = {1.5, 0.8, -0.8, 0.3, 0.4, -0.1, 0.5, 0.0, 1.0};
      break;
    case gloss::ModelKind::kMmnl:
      spec.theta_g = {1.0, -0.5, -1.0, 0.3, -0.2, 0.2, 0.0, 0.0, 0.3, 0.0, 0.4, 0.0, 0.0, 0.0};
      break;
    case gloss::ModelKind::kLinearGaussian: spec.theta_g = {0.5, -0.2}; break;
  }
  return gloss::make_model(gloss::simulate(spec));
}

inline const std::vector<gloss::ModelKind>& bundled_kinds() {
  static const std::vector<gloss::ModelKind> kinds = {
      gloss::ModelKind::kLogistic, gloss::ModelKind::kPoisson, gloss::ModelKind::kMmnl};
  return kinds;
}

/// 1-D global-only target (no groups) with log density `f`.
template <class F>
std::unique_ptr<gloss::HierarchicalModel> global_target(F f) {
  auto sig = gloss::ModelSignature::uniform(0, 1, 1, {"x"});
  auto local = [](std::size_t, auto b, auto) { return b[0] * 0.0; };
  return gloss::make_functional_model(
      sig, [f](auto theta) { return f(theta[0]); }, local, "toy");
}

/// One group with d = d_i = 1: log p(theta_G) + log h_1(b | theta_G) given by
/// `prior` and `local`.
template <class P, class L>
std::unique_ptr<gloss::HierarchicalModel> one_group_target(P prior, L local) {
  auto sig = gloss::ModelSignature::uniform(1, 1, 1, {"g"}, {"b"});
  return gloss::make_functional_model(
      sig, [prior](auto theta) { return prior(theta[0]); },
      [local](std::size_t, auto b, auto theta) { return local(b[0], theta[0]); }, "toy");
}

}  // namespace fixtures
