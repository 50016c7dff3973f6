#include "gloss/elbo.hpp"

#include <cmath>
#include <limits>

namespace gloss {

namespace {

// Contribution of group i at one global branch. Without local skew this is
// log h_i(b) - log phi_i(b). With it, the kept and mirrored points enter with
// weights w and 1 - w, and since w = h_i(b) / (h_i(b) + h_i(b')) the sum
//   w (log h_i(b) - log 2 phi w) + (1 - w)(log h_i(b') - log 2 phi (1 - w))
// collapses to log(h_i(b) + h_i(b')) - log 2 phi. phi is equal at both points.
template <class T>
T group_term(const HierarchicalModel& model, std::size_t i, const LocalConditional<T>& c,
             std::span<const double> eps, std::span<const T> theta_g, bool local_skew,
             double* w_out) {
  const std::size_t k = c.mu.size();
  std::vector<T> eps_t(eps.begin(), eps.end());
  auto b = tri_solve(c.t, std::span<const T>(eps_t), Side::kTranspose);
  for (std::size_t j = 0; j < k; ++j) b[j] += c.mu[j];

  // log phi at b: the quadratic form is |eps|^2 by construction.
  T log_phi = -0.5 * static_cast<double>(k) * kLog2Pi;
  for (std::size_t j = 0; j < k; ++j) log_phi += c.log_diag[j] - 0.5 * eps[j] * eps[j];

  const T lh1 = model.log_h_local(i, std::span<const T>(b), theta_g);
  if (!local_skew) return lh1 - log_phi;

  std::vector<T> mirror(k);
  for (std::size_t j = 0; j < k; ++j) mirror[j] = 2.0 * c.mu[j] - b[j];
  const T lh2 = model.log_h_local(i, std::span<const T>(mirror), theta_g);
  if (w_out) *w_out = sigmoid(value(lh1) - value(lh2));
  return log_sum_exp(lh1, lh2) - log_phi - kLog2;
}

}  // namespace

template <class T>
T elbo_marginalized(const HierarchicalModel& model, const VariationalParams<T>& p,
                    const VariantSpec& variant, const Noise& noise, BranchWeights* weights) {
  const std::size_t d = p.global_dim();
  const std::size_t n = p.groups();
  if (noise.global.size() != d || noise.local.size() != n) {
    throw DimensionError("elbo: noise does not match the parameter dimensions");
  }

  const auto t_g = star_inverse(p.t_g_star);
  std::vector<T> eps_g(noise.global.begin(), noise.global.end());
  std::vector<T> theta1 = tri_solve(t_g, std::span<const T>(eps_g), Side::kTranspose);
  for (std::size_t k = 0; k < d; ++k) theta1[k] += p.mu_g[k];

  T log_phi_g = -0.5 * static_cast<double>(d) * kLog2Pi;
  for (std::size_t k = 0; k < d; ++k) {
    log_phi_g += p.t_g_star.diag(k) - 0.5 * noise.global[k] * noise.global[k];
  }

  std::vector<std::vector<T>> thetas{theta1};
  if (variant.global_skew()) {
    std::vector<T> theta2(d);
    for (std::size_t k = 0; k < d; ++k) theta2[k] = 2.0 * p.mu_g[k] - theta1[k];
    thetas.push_back(std::move(theta2));
  }

  if (weights) {
    weights->global.clear();
    weights->local.assign(thetas.size(), std::vector<double>(n, 0.5));
  }

  std::vector<T> branch_value;
  std::vector<T> log_h_tildes;
  for (std::size_t br = 0; br < thetas.size(); ++br) {
    const std::span<const T> theta_g(thetas[br]);
    std::vector<LocalConditional<T>> conds;
    if (variant.global_skew()) {
      log_h_tildes.push_back(log_h_tilde(model, p, theta_g, &conds));
    } else {
      for (std::size_t i = 0; i < n; ++i) conds.push_back(conditional(p, i, theta_g));
    }
    T value_br = model.log_prior_global(theta_g) - log_phi_g;
    for (std::size_t i = 0; i < n; ++i) {
      double* w = weights ? &weights->local[br][i] : nullptr;
      value_br += group_term<T>(model, i, conds[i], noise.local[i], theta_g,
                                variant.local_skew(), w);
    }
    branch_value.push_back(value_br);
  }

  if (!variant.global_skew()) {
    if (weights) weights->global = {1.0};
    return branch_value[0];
  }
  const T logit = log_h_tildes[0] - log_h_tildes[1];
  const T w = sigmoid(logit);
  if (weights) weights->global = {value(w), 1.0 - value(w)};
  return w * (branch_value[0] - log_sigmoid(logit)) +
         (1.0 - w) * (branch_value[1] - log_sigmoid(-logit)) - kLog2;
}

template double elbo_marginalized<double>(const HierarchicalModel&,
                                          const VariationalParams<double>&,
                                          const VariantSpec&, const Noise&, BranchWeights*);
template ad::Var elbo_marginalized<ad::Var>(const HierarchicalModel&,
                                            const VariationalParams<ad::Var>&,
                                            const VariantSpec&, const Noise&, BranchWeights*);

GradientEstimator parse_gradient_estimator(const std::string& name) {
  if (name == "total") return GradientEstimator::kTotal;
  if (name == "path") return GradientEstimator::kPath;
  throw std::invalid_argument("unknown gradient estimator '" + name + "' (total, path)");
}

std::string to_string(GradientEstimator estimator) {
  return estimator == GradientEstimator::kPath ? "path" : "total";
}

namespace {

using ad::Var;

std::vector<Var> mirrored(std::span<const Var> centre, std::span<const Var> x) {
  std::vector<Var> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = 2.0 * centre[k] - x[k];
  return out;
}

// log h_i(b) - log q_i(b | theta_G) with q's parameters held fixed.
Var local_gap(const HierarchicalModel& model, std::size_t i, const VariationalParams<Var>& fixed,
              std::span<const Var> theta_g, std::span<const Var> b, const Var& log_h,
              bool local_skew) {
  const auto c = conditional(fixed, i, theta_g);
  Var lq = gaussian_log_density<Var>(c.t, c.log_diag, c.mu, b);
  if (local_skew) {
    const auto m = mirrored(c.mu, b);
    lq += kLog2 + clamped_log_weight(log_h - model.log_h_local(i, std::span<const Var>(m), theta_g));
  }
  return log_h - lq;
}

// Same value as elbo_marginalized; lambda enters only through the draws and
// the branch weights.
Var path_objective(const HierarchicalModel& model, const VariationalParams<Var>& live,
                   const VariationalParams<Var>& fixed, const VariantSpec& variant,
                   const Noise& noise, BranchWeights* weights) {
  const std::size_t d = live.global_dim();
  const std::size_t n = live.groups();
  if (noise.global.size() != d || noise.local.size() != n) {
    throw DimensionError("elbo: noise does not match the parameter dimensions");
  }
  const auto t_g = star_inverse(live.t_g_star);
  std::vector<Var> eps_g(noise.global.begin(), noise.global.end());
  std::vector<Var> theta1 = tri_solve(t_g, std::span<const Var>(eps_g), Side::kTranspose);
  for (std::size_t k = 0; k < d; ++k) theta1[k] += live.mu_g[k];

  std::vector<std::vector<Var>> thetas{theta1};
  std::vector<Var> branch_weight{Var(1.0)};
  if (variant.global_skew()) {
    thetas.push_back(mirrored(live.mu_g, theta1));
    const Var w = sigmoid(log_h_tilde(model, live, std::span<const Var>(thetas[0])) -
                          log_h_tilde(model, live, std::span<const Var>(thetas[1])));
    branch_weight = {w, 1.0 - w};
  }
  if (weights) {
    weights->global.clear();
    for (const Var& w : branch_weight) weights->global.push_back(w.value());
    weights->local.assign(thetas.size(), std::vector<double>(n, 0.5));
  }

  const auto t_g_fixed = star_inverse(fixed.t_g_star);
  std::vector<Var> log_diag_g;
  for (std::size_t k = 0; k < d; ++k) log_diag_g.push_back(fixed.t_g_star.diag(k));

  Var total(0.0);
  for (std::size_t br = 0; br < thetas.size(); ++br) {
    const std::span<const Var> theta_g(thetas[br]);
    Var lq_g = gaussian_log_density<Var>(t_g_fixed, log_diag_g, fixed.mu_g, theta_g);
    if (variant.global_skew()) {
      const auto m = mirrored(fixed.mu_g, theta_g);
      lq_g += kLog2 + clamped_log_weight(log_h_tilde(model, fixed, theta_g) -
                                         log_h_tilde(model, fixed, std::span<const Var>(m)));
    }
    Var value_br = model.log_prior_global(theta_g) - lq_g;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = conditional(live, i, theta_g);
      std::vector<Var> eps(noise.local[i].begin(), noise.local[i].end());
      auto b = tri_solve(c.t, std::span<const Var>(eps), Side::kTranspose);
      for (std::size_t k = 0; k < b.size(); ++k) b[k] += c.mu[k];
      const Var lh1 = model.log_h_local(i, std::span<const Var>(b), theta_g);
      if (!variant.local_skew()) {
        value_br += local_gap(model, i, fixed, theta_g, b, lh1, false);
        continue;
      }
      const auto b2 = mirrored(c.mu, b);
      const Var lh2 = model.log_h_local(i, std::span<const Var>(b2), theta_g);
      const Var w = sigmoid(lh1 - lh2);
      if (weights) weights->local[br][i] = w.value();
      value_br += w * local_gap(model, i, fixed, theta_g, b, lh1, true) +
                  (1.0 - w) * local_gap(model, i, fixed, theta_g, b2, lh2, true);
    }
    total += branch_weight[br] * value_br;
  }
  return total;
}

}  // namespace

ElboSample elbo_gradient(const HierarchicalModel& model, const ParamLayout& layout,
                         std::span<const double> lambda, const VariantSpec& variant,
                         const Noise& noise, GradientEstimator estimator) {
  // One tape per thread, cleared between calls, so the node buffer keeps its
  // capacity across optimizer steps instead of regrowing every time.
  thread_local ad::Tape tape;
  tape.clear();
  const auto vars = tape.variables(lambda);
  const auto p = unpack<ad::Var>(layout, vars);
  ElboSample out;
  ad::Var value;
  if (estimator == GradientEstimator::kPath) {
    const std::vector<ad::Var> constants(lambda.begin(), lambda.end());
    const auto fixed = unpack<ad::Var>(layout, constants);
    value = path_objective(model, p, fixed, variant, noise, &out.weights);
  } else {
    value = elbo_marginalized(model, p, variant, noise, &out.weights);
  }
  out.value = value.value();
  out.gradient = tape.gradient(value, vars);
  const auto mask = layout.free_mask();
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (!mask[k]) out.gradient[k] = 0.0;
  out.noise = noise;
  return out;
}

double indicator_integrand(const HierarchicalModel& model, const VariationalParams<double>& p,
                           const VariantSpec& variant, const Noise& noise,
                           const Uniforms& uniforms) {
  const Draw draw = replay(model, p, variant, noise, uniforms);
  const auto theta = draw.theta();
  return log_h_joint(model, theta) - log_q<double>(model, p, variant, theta);
}

ElboEstimate elbo_estimate(const HierarchicalModel& model, const VariationalParams<double>& p,
                           const VariantSpec& variant, std::size_t samples,
                           std::uint64_t seed) {
  if (samples == 0) throw std::invalid_argument("elbo_estimate: need at least one sample");
  const ParamLayout layout(model.signature(), p.base);
  // Welford accumulation in draw order.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double v = elbo_marginalized(model, p, variant, draw_noise(layout, seed, s));
    const double delta = v - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (v - mean);
  }
  ElboEstimate est;
  est.mean = mean;
  est.samples = samples;
  est.se = samples > 1
               ? std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples))
               : std::numeric_limits<double>::quiet_NaN();
  return est;
}

}  // namespace gloss
