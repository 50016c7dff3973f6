#include "gloss/skew.hpp"

#include <cmath>
#include <stdexcept>

#include "gloss/rng.hpp"

namespace gloss {

template <class T>
LowerTriangular<T> local_scale_star(const VariationalParams<T>& p, std::size_t i,
                                    std::span<const T> theta_g) {
  const LocalParams<T>& l = p.locals[i];
  std::vector<T> coords = l.f;
  if (p.base == VariantSpec::Base::kCsg) {
    for (std::size_t r = 0; r < coords.size(); ++r)
      for (std::size_t c = 0; c < theta_g.size(); ++c) coords[r] += l.b(r, c) * theta_g[c];
  }
  return unvech<T>(coords);
}

template <class T>
LowerTriangular<T> local_scale(const VariationalParams<T>& p, std::size_t i,
                               std::span<const T> theta_g) {
  return star_inverse(local_scale_star(p, i, theta_g));
}

template <class T>
std::vector<T> local_mean(const VariationalParams<T>& p, std::size_t i,
                          std::span<const T> theta_g, const LowerTriangular<T>& t_i) {
  const LocalParams<T>& l = p.locals[i];
  std::vector<T> diff(theta_g.size());
  for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = p.mu_g[k] - theta_g[k];
  const auto v = multiply_transpose(l.t_gi, std::span<const T>(diff));
  auto shift = tri_solve(t_i, std::span<const T>(v), Side::kTranspose);
  for (std::size_t k = 0; k < shift.size(); ++k) shift[k] += l.m[k];
  return shift;
}

template <class T>
LocalConditional<T> conditional(const VariationalParams<T>& p, std::size_t i,
                                std::span<const T> theta_g) {
  LocalConditional<T> c;
  const auto star_form = local_scale_star(p, i, theta_g);
  c.log_diag.reserve(star_form.dim());
  for (std::size_t j = 0; j < star_form.dim(); ++j) c.log_diag.push_back(star_form.diag(j));
  c.t = star_inverse(star_form);
  c.mu = local_mean(p, i, theta_g, c.t);
  return c;
}

template <class T>
T gaussian_log_density(const LowerTriangular<T>& t, std::span<const T> log_diag,
                       std::span<const T> mu, std::span<const T> x) {
  const std::size_t k = t.dim();
  std::vector<T> diff(k);
  for (std::size_t j = 0; j < k; ++j) diff[j] = x[j] - mu[j];
  const auto z = tri_multiply(t, std::span<const T>(diff), Side::kTranspose);
  T out = -0.5 * static_cast<double>(k) * kLog2Pi;
  for (std::size_t j = 0; j < k; ++j) out += log_diag[j] - 0.5 * z[j] * z[j];
  return out;
}

template <class T>
T local_skew_logit(const HierarchicalModel& model, std::size_t i, std::span<const T> b,
                   std::span<const T> mu_i, std::span<const T> theta_g) {
  std::vector<T> mirror(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) mirror[k] = 2.0 * mu_i[k] - b[k];
  return model.log_h_local(i, b, theta_g) -
         model.log_h_local(i, std::span<const T>(mirror), theta_g);
}

double w_local(const HierarchicalModel& model, const VariationalParams<double>& p,
               std::size_t i, std::span<const double> b, std::span<const double> theta_g) {
  const auto c = conditional(p, i, theta_g);
  return sigmoid(local_skew_logit<double>(model, i, b, c.mu, theta_g));
}

template <class T>
T log_h_tilde(const HierarchicalModel& model, const VariationalParams<T>& p,
              std::span<const T> theta_g, std::vector<LocalConditional<T>>* conds) {
  T out = model.log_prior_global(theta_g);
  if (conds) conds->clear();
  for (std::size_t i = 0; i < p.groups(); ++i) {
    auto c = conditional(p, i, theta_g);
    out += 0.5 * static_cast<double>(c.mu.size()) * kLog2Pi;
    for (const T& ld : c.log_diag) out -= ld;
    out += model.log_h_local(i, std::span<const T>(c.mu), theta_g);
    if (conds) conds->push_back(std::move(c));
  }
  return out;
}

double w_global(const HierarchicalModel& model, const VariationalParams<double>& p,
                std::span<const double> theta_g) {
  std::vector<double> mirror(theta_g.size());
  for (std::size_t k = 0; k < mirror.size(); ++k) mirror[k] = 2.0 * p.mu_g[k] - theta_g[k];
  return sigmoid(log_h_tilde(model, p, theta_g) -
                 log_h_tilde(model, p, std::span<const double>(mirror)));
}

namespace {

template <class T>
std::vector<T> t_g_log_diag(const VariationalParams<T>& p) {
  std::vector<T> out;
  for (std::size_t j = 0; j < p.global_dim(); ++j) out.push_back(p.t_g_star.diag(j));
  return out;
}

}  // namespace

template <class T>
T clamped_log_weight(const T& logit) {
  static const double floor = std::log(1e-300);
  static const double ceil = std::log1p(-1e-16);
  const T lw = log_sigmoid(logit);
  if (value(lw) < floor) return T(floor);
  if (value(lw) > ceil) return T(ceil);
  return lw;
}

template <class T>
T log_q(const HierarchicalModel& model, const VariationalParams<T>& p,
        const VariantSpec& variant, std::span<const T> theta) {
  const std::size_t d = p.global_dim();
  std::size_t total = d;
  for (const auto& l : p.locals) total += l.m.size();
  if (theta.size() != total) throw DimensionError("log_q: theta has the wrong length");

  const auto theta_g = theta.first(d);
  const auto t_g = star_inverse(p.t_g_star);
  const auto log_diag_g = t_g_log_diag(p);
  T out = gaussian_log_density<T>(t_g, log_diag_g, p.mu_g, theta_g);
  if (variant.global_skew()) {
    std::vector<T> mirror(d);
    for (std::size_t k = 0; k < d; ++k) mirror[k] = 2.0 * p.mu_g[k] - theta_g[k];
    const T logit = log_h_tilde(model, p, theta_g) -
                    log_h_tilde(model, p, std::span<const T>(mirror));
    out += kLog2 + clamped_log_weight(logit);
  }
  std::size_t off = d;
  for (std::size_t i = 0; i < p.groups(); ++i) {
    const std::size_t di = p.locals[i].m.size();
    const auto b = theta.subspan(off, di);
    off += di;
    const auto c = conditional(p, i, theta_g);
    out += gaussian_log_density<T>(c.t, c.log_diag, c.mu, b);
    if (variant.local_skew()) {
      out += kLog2 + clamped_log_weight(local_skew_logit<T>(model, i, b, c.mu, theta_g));
    }
  }
  return out;
}

Noise draw_noise(const ParamLayout& layout, std::uint64_t seed, std::uint64_t index) {
  Noise noise;
  Stream g(seed, index, 0);
  noise.global.resize(layout.global_dim());
  for (double& e : noise.global) e = g.normal();
  noise.local.resize(layout.groups());
  for (std::size_t i = 0; i < layout.groups(); ++i) {
    Stream s(seed, index, i + 1);
    noise.local[i].resize(layout.local_dims()[i]);
    for (double& e : noise.local[i]) e = s.normal();
  }
  return noise;
}

Uniforms draw_uniforms(const ParamLayout& layout, std::uint64_t seed, std::uint64_t index) {
  // Uniforms use their own key space so they are independent of the noise.
  constexpr std::uint64_t kSalt = 0x9E3779B97F4A7C15ULL;
  Uniforms u;
  Stream g(seed ^ kSalt, index, 0);
  u.global = g.uniform();
  u.local.resize(layout.groups());
  for (std::size_t i = 0; i < layout.groups(); ++i) {
    Stream s(seed ^ kSalt, index, i + 1);
    u.local[i] = s.uniform();
  }
  return u;
}

std::vector<double> Draw::theta() const {
  std::vector<double> out = theta_g;
  for (const auto& bi : b) out.insert(out.end(), bi.begin(), bi.end());
  return out;
}

Draw replay(const HierarchicalModel& model, const VariationalParams<double>& p,
            const VariantSpec& variant, const Noise& noise, const Uniforms& uniforms) {
  const std::size_t d = p.global_dim();
  Draw draw;
  draw.noise = noise;
  draw.uniforms = uniforms;

  const auto t_g = star_inverse(p.t_g_star);
  draw.theta_g = tri_solve<double>(t_g, noise.global, Side::kTranspose);
  for (std::size_t k = 0; k < d; ++k) draw.theta_g[k] += p.mu_g[k];
  if (variant.global_skew()) {
    draw.w_global = w_global(model, p, draw.theta_g);
    if (uniforms.global > draw.w_global) {
      draw.reflected_global = true;
      for (std::size_t k = 0; k < d; ++k) draw.theta_g[k] = 2.0 * p.mu_g[k] - draw.theta_g[k];
    }
  }

  const std::size_t n = p.groups();
  draw.b.resize(n);
  draw.reflected_local.assign(n, false);
  draw.w_local.assign(n, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = conditional<double>(p, i, draw.theta_g);
    auto b = tri_solve<double>(c.t, noise.local[i], Side::kTranspose);
    for (std::size_t k = 0; k < b.size(); ++k) b[k] += c.mu[k];
    if (variant.local_skew()) {
      draw.w_local[i] = sigmoid(local_skew_logit<double>(model, i, b, c.mu, draw.theta_g));
      if (uniforms.local[i] > draw.w_local[i]) {
        draw.reflected_local[i] = true;
        for (std::size_t k = 0; k < b.size(); ++k) b[k] = 2.0 * c.mu[k] - b[k];
      }
    }
    draw.b[i] = std::move(b);
  }
  return draw;
}

Draw sample(const HierarchicalModel& model, const VariationalParams<double>& p,
            const VariantSpec& variant, std::uint64_t seed, std::uint64_t index) {
  ParamLayout layout(model.signature(), p.base);
  return replay(model, p, variant, draw_noise(layout, seed, index),
                draw_uniforms(layout, seed, index));
}

Matrix<double> sample_matrix(const HierarchicalModel& model,
                             const VariationalParams<double>& p, const VariantSpec& variant,
                             std::size_t count, std::uint64_t seed) {
  const ParamLayout layout(model.signature(), p.base);
  const std::size_t dim = model.signature().total_dim();
  Matrix<double> out(count, dim);
  for (std::size_t s = 0; s < count; ++s) {
    const Draw draw = replay(model, p, variant, draw_noise(layout, seed, s),
                             draw_uniforms(layout, seed, s));
    const auto theta = draw.theta();
    for (std::size_t k = 0; k < dim; ++k) out(s, k) = theta[k];
  }
  return out;
}

PosthocView posthoc_wrap(const std::vector<double>& lambda, const VariantSpec& fitted,
                         const VariantSpec& target) {
  target.validate();
  if (fitted.skew != VariantSpec::Skew::kNone) {
    throw std::invalid_argument("posthoc_wrap: " + fitted.name() +
                                " is not an unskewed base fit");
  }
  if (!target.posthoc() || target.base != fitted.base) {
    throw std::invalid_argument("posthoc_wrap: " + target.name() +
                                " is not a post-hoc correction of " + fitted.name());
  }
  return PosthocView{target, lambda};
}

#define GLOSS_INSTANTIATE(T)                                                              \
  template LowerTriangular<T> local_scale_star<T>(const VariationalParams<T>&,            \
                                                  std::size_t, std::span<const T>);       \
  template LowerTriangular<T> local_scale<T>(const VariationalParams<T>&, std::size_t,    \
                                             std::span<const T>);                         \
  template std::vector<T> local_mean<T>(const VariationalParams<T>&, std::size_t,         \
                                        std::span<const T>, const LowerTriangular<T>&);   \
  template LocalConditional<T> conditional<T>(const VariationalParams<T>&, std::size_t,   \
                                              std::span<const T>);                        \
  template T gaussian_log_density<T>(const LowerTriangular<T>&, std::span<const T>,       \
                                     std::span<const T>, std::span<const T>);             \
  template T local_skew_logit<T>(const HierarchicalModel&, std::size_t,                   \
                                 std::span<const T>, std::span<const T>,                  \
                                 std::span<const T>);                                     \
  template T log_h_tilde<T>(const HierarchicalModel&, const VariationalParams<T>&,        \
                            std::span<const T>, std::vector<LocalConditional<T>>*);       \
  template T clamped_log_weight<T>(const T&);                                             \
  template T log_q<T>(const HierarchicalModel&, const VariationalParams<T>&,              \
                      const VariantSpec&, std::span<const T>);

GLOSS_INSTANTIATE(double)
GLOSS_INSTANTIATE(ad::Var)

#undef GLOSS_INSTANTIATE

}  // namespace gloss
