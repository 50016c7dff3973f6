#pragma once

// The variational family q_lambda and its skew corrections.
//
// Base density: theta_G ~ N(mu_G, (T_G T_G')^-1) and, given theta_G,
//   b_i ~ N(mu_i(theta_G), (T_i T_i')^-1)
//   vech(T_i(theta_G)*) = f_i + B_i theta_G
//   mu_i(theta_G) = m_i + T_i^-T T_Gi' (mu_G - theta_G).
//
// Skew corrections multiply a level's Gaussian factor by 2 w, with
//   w(b_i)     = sigmoid(log h_i(b_i) - log h_i(2 mu_i - b_i))
//   w(theta_G) = sigmoid(log h~(theta_G) - log h~(2 mu_G - theta_G))
// and h~ the Laplace-style marginal kernel built from the conditionals.

#include <cstdint>
#include <span>
#include <vector>

#include "gloss/model.hpp"
#include "gloss/variational.hpp"

namespace gloss {

template <class T>
struct LocalConditional {
  LowerTriangular<T> t;      // T_i(theta_G)
  std::vector<T> log_diag;   // log T_i,jj, exact star coordinates
  std::vector<T> mu;         // mu_i(theta_G)
};

/// vech(T_i(theta_G)*) = f_i + B_i theta_G, returned in star (log-diagonal)
/// form. The Gaussian base ignores B_i.
template <class T>
LowerTriangular<T> local_scale_star(const VariationalParams<T>& p, std::size_t i,
                                    std::span<const T> theta_g);

/// T_i(theta_G): star_inverse of local_scale_star.
template <class T>
LowerTriangular<T> local_scale(const VariationalParams<T>& p, std::size_t i,
                               std::span<const T> theta_g);

/// mu_i(theta_G) given T_i(theta_G).
template <class T>
std::vector<T> local_mean(const VariationalParams<T>& p, std::size_t i,
                          std::span<const T> theta_g, const LowerTriangular<T>& t_i);

template <class T>
LocalConditional<T> conditional(const VariationalParams<T>& p, std::size_t i,
                                std::span<const T> theta_g);

/// -(k/2) log 2 pi + sum log T_jj - |T'(x - mu)|^2 / 2, with log T_jj given.
template <class T>
T gaussian_log_density(const LowerTriangular<T>& t, std::span<const T> log_diag,
                       std::span<const T> mu, std::span<const T> x);

/// log h_i(b) - log h_i(2 mu_i - b): the logit of w(b_i).
template <class T>
T local_skew_logit(const HierarchicalModel& model, std::size_t i, std::span<const T> b,
                   std::span<const T> mu_i, std::span<const T> theta_g);

double w_local(const HierarchicalModel& model, const VariationalParams<double>& p,
               std::size_t i, std::span<const double> b, std::span<const double> theta_g);

/// log p(theta_G) + sum_i [(d_i/2) log 2 pi - sum_j log T_i,jj + log h_i(mu_i)],
/// with T_i and mu_i evaluated at theta_G. When `conds` is given it receives
/// the conditionals used.
template <class T>
T log_h_tilde(const HierarchicalModel& model, const VariationalParams<T>& p,
              std::span<const T> theta_g, std::vector<LocalConditional<T>>* conds = nullptr);

double w_global(const HierarchicalModel& model, const VariationalParams<double>& p,
                std::span<const double> theta_g);

/// log sigmoid(logit) clamped to [log 1e-300, log(1 - 1e-16)].
template <class T>
T clamped_log_weight(const T& logit);

/// log q(theta) for theta = (theta_G, b_1..b_n) under the variant's
/// corrections. Skew weights are clamped to [1e-300, 1 - 1e-16] before the log.
template <class T>
T log_q(const HierarchicalModel& model, const VariationalParams<T>& p,
        const VariantSpec& variant, std::span<const T> theta);

/// Standard-normal noise for one draw of the family.
struct Noise {
  std::vector<double> global;
  std::vector<std::vector<double>> local;
};

struct Uniforms {
  double global = 0.5;
  std::vector<double> local;
};

/// Noise for draw `index`, keyed by (seed, index, group) so it does not depend
/// on how draws are scheduled. Group 0 is theta_G; group i+1 is b_i.
Noise draw_noise(const ParamLayout& layout, std::uint64_t seed, std::uint64_t index);
Uniforms draw_uniforms(const ParamLayout& layout, std::uint64_t seed, std::uint64_t index);

struct Draw {
  std::vector<double> theta_g;
  std::vector<std::vector<double>> b;
  bool reflected_global = false;
  std::vector<bool> reflected_local;
  double w_global = 0.5;             // at the pre-reflection point
  std::vector<double> w_local;       // at the pre-reflection points
  Noise noise;
  Uniforms uniforms;

  /// (theta_G, b_1..b_n) flattened.
  std::vector<double> theta() const;
};

/// Rejection-free sampling with the given noise: form the base draw, keep it
/// with probability w and reflect about the centre otherwise, globals first.
Draw replay(const HierarchicalModel& model, const VariationalParams<double>& p,
            const VariantSpec& variant, const Noise& noise, const Uniforms& uniforms);

Draw sample(const HierarchicalModel& model, const VariationalParams<double>& p,
            const VariantSpec& variant, std::uint64_t seed, std::uint64_t index);

/// Flat draws, one row per draw, columns as ModelSignature::labels().
Matrix<double> sample_matrix(const HierarchicalModel& model,
                             const VariationalParams<double>& p, const VariantSpec& variant,
                             std::size_t count, std::uint64_t seed);

/// A fitted lambda viewed under a post-hoc correction. The parameters are
/// shared unchanged; only sampling and density evaluation change.
struct PosthocView {
  VariantSpec variant;
  std::vector<double> lambda;
};

/// Throws std::invalid_argument unless `target` is a post-hoc correction of
/// `fitted` (same base, fitted unskewed).
PosthocView posthoc_wrap(const std::vector<double>& lambda, const VariantSpec& fitted,
                         const VariantSpec& target);

}  // namespace gloss
