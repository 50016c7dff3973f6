#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gloss/skew.hpp"
#include "gloss/stats.hpp"
#include "oracles.hpp"

using namespace gloss;

namespace {

auto skewed_local() {
  return [](auto b, auto g) {
    using std::exp;
    const auto u = b - 0.5 * g;
    return u - exp(u);
  };
}

auto skewed_prior() {
  return [](auto g) {
    using std::exp;
    return 0.7 * g - exp(0.7 * g) - 0.1 * g * g;
  };
}

std::vector<VariantSpec> all_variants() {
  auto out = ladder();
  out.push_back({VariantSpec::Base::kCsg, VariantSpec::Skew::kGlobal, VariantSpec::Fit::kLearned});
  out.push_back({VariantSpec::Base::kCsg, VariantSpec::Skew::kGlobal, VariantSpec::Fit::kPosthoc});
  return out;
}

double log_q_at(const HierarchicalModel& model, const VariationalParams<double>& p,
                const VariantSpec& v, std::vector<double> theta) {
  return log_q<double>(model, p, v, theta);
}

}  // namespace

TEST(Skew, LocalScaleAndMeanSpecialCases) {
  auto model = fixtures::one_group_target(skewed_prior(), skewed_local());
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  std::vector<double> lambda(layout.size(), 0.0);
  auto p = unpack<double>(layout, lambda);
  const std::vector<double> g{1.7};
  const auto t = local_scale(p, 0, std::span<const double>(g));
  EXPECT_DOUBLE_EQ(t.diag(0), 1.0);
  // T_Gi = 0: the mean is m_i for every theta_G
  p.locals[0].m = {0.3};
  EXPECT_DOUBLE_EQ(local_mean(p, 0, std::span<const double>(g), t)[0], 0.3);
  // theta_G = mu_G: the shift vanishes
  p.locals[0].t_gi(0, 0) = 2.0;
  p.mu_g = {1.7};
  EXPECT_DOUBLE_EQ(local_mean(p, 0, std::span<const double>(g), t)[0], 0.3);
  // B_i = 0: T_i does not depend on theta_G; B_i != 0: it does, through exp
  p.locals[0].f = {0.4};
  const std::vector<double> g2{-0.9};
  EXPECT_DOUBLE_EQ(local_scale(p, 0, std::span<const double>(g)).diag(0),
                   local_scale(p, 0, std::span<const double>(g2)).diag(0));
  p.locals[0].b(0, 0) = 0.5;
  EXPECT_NEAR(local_scale(p, 0, std::span<const double>(g2)).diag(0), std::exp(0.4 - 0.45), 1e-15);
  // the Gaussian base ignores B_i
  p.base = VariantSpec::Base::kGaussian;
  EXPECT_NEAR(local_scale(p, 0, std::span<const double>(g2)).diag(0), std::exp(0.4), 1e-15);
}

TEST(Skew, LocalScaleOverflowIsATraceError) {
  auto model = fixtures::one_group_target(skewed_prior(), skewed_local());
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  std::vector<double> lambda(layout.size(), 0.0);
  lambda[layout.f_offset(0)] = 800.0;
  ad::Tape tape;
  const auto vars = tape.variables(lambda);
  const auto p = unpack<ad::Var>(layout, vars);
  const std::vector<ad::Var> g{ad::Var(0.0)};
  EXPECT_THROW(local_scale(p, 0, std::span<const ad::Var>(g)), ad::TraceInvalid);
}

TEST(Skew, LocalWeightSpecialValues) {
  auto model = fixtures::one_group_target(skewed_prior(), skewed_local());
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  auto p = unpack<double>(layout, fixtures::random_lambda(layout, 3));
  const std::vector<double> g{0.4};
  const auto c = conditional(p, 0, std::span<const double>(g));
  EXPECT_DOUBLE_EQ(w_local(*model, p, 0, c.mu, g), 0.5);

  // direct formula: h(b) = exp(u - e^u), u = b - g/2
  const auto log_h = [&](double b) {
    const double u = b - 0.5 * g[0];
    return u - std::exp(u);
  };
  for (double b : {-2.0, -0.3, 0.8, 1.9}) {
    const double mirror = 2.0 * c.mu[0] - b;
    const double expected = 1.0 / (1.0 + std::exp(log_h(mirror) - log_h(b)));
    EXPECT_NEAR(w_local(*model, p, 0, std::vector<double>{b}, g), expected, 1e-14);
  }

  // Gaussian local target centred at mu_i: w = 1/2 everywhere
  auto sym = fixtures::one_group_target([](auto g) { return -0.5 * g * g; },
                                        [](auto b, auto g) { return -0.5 * (b - g) * (b - g); });
  std::vector<double> lam(layout.size(), 0.0);
  lam[layout.t_gi_offset(0)] = -1.0;
  const auto ps = unpack<double>(layout, lam);
  for (double gv : {-1.0, 0.2, 2.5})
    for (double b : {-3.0, 0.0, 4.0})
      EXPECT_NEAR(w_local(*sym, ps, 0, std::vector<double>{b}, std::vector<double>{gv}), 0.5, 1e-15);
}

TEST(Skew, GlobalWeightSpecialValues) {
  const auto f = [](auto x) {
    using std::exp;
    return x - exp(x);
  };
  auto model = fixtures::global_target(f);
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  const auto p = unpack<double>(layout, std::vector<double>{0.3, -0.2});
  // no groups: h~ is the prior
  for (double x : {-1.0, 0.0, 2.0})
    EXPECT_DOUBLE_EQ(log_h_tilde<double>(*model, p, std::vector<double>{x}), f(x));
  EXPECT_DOUBLE_EQ(w_global(*model, p, std::vector<double>{0.3}), 0.5);
  for (double x : {-1.5, 0.1, 1.2}) {
    const double expected = 1.0 / (1.0 + std::exp(f(0.6 - x) - f(x)));
    EXPECT_NEAR(w_global(*model, p, std::vector<double>{x}), expected, 1e-14);
  }
  auto sym = fixtures::global_target([](auto x) { return -0.5 * (x - 0.3) * (x - 0.3); });
  for (double x : {-4.0, 0.0, 3.0})
    EXPECT_NEAR(w_global(*sym, p, std::vector<double>{x}), 0.5, 1e-15);
}

TEST(Skew, ReflectionIdentityOnBundledModels) {
  for (auto kind : fixtures::bundled_kinds()) {
    const auto model = fixtures::small_model(kind, 3);
    const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
    const auto p = unpack<double>(layout, fixtures::random_lambda(layout, 12, 0.3));
    const std::size_t d = layout.global_dim();
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z(0.0, 0.7);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> g(d);
      std::vector<double> gm(d);
      for (std::size_t k = 0; k < d; ++k) {
        g[k] = p.mu_g[k] + z(rng);
        gm[k] = 2.0 * p.mu_g[k] - g[k];
      }
      EXPECT_NEAR(w_global(*model, p, g) + w_global(*model, p, gm), 1.0, 1e-12);
      const std::size_t i = static_cast<std::size_t>(rep) % layout.groups();
      const auto c = conditional(p, i, std::span<const double>(g));
      std::vector<double> b(c.mu.size());
      std::vector<double> bm(c.mu.size());
      for (std::size_t k = 0; k < b.size(); ++k) {
        b[k] = c.mu[k] + z(rng);
        bm[k] = 2.0 * c.mu[k] - b[k];
      }
      EXPECT_NEAR(w_local(*model, p, i, b, g) + w_local(*model, p, i, bm, g), 1.0, 1e-12);
    }
  }
}

TEST(Skew, DensityIntegratesToOneWithoutGroups) {
  auto model = fixtures::global_target(skewed_prior());
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  const auto p = unpack<double>(layout, std::vector<double>{0.4, std::log(0.8)});
  const double sd = 1.0 / 0.8;
  const auto x = oracle::grid(0.4 - 10 * sd, 0.4 + 10 * sd, 4001);
  for (const auto& v : all_variants()) {
    oracle::Vec dens;
    for (double xv : x) dens.push_back(std::exp(log_q_at(*model, p, v, {xv})));
    EXPECT_NEAR(oracle::trapezoid(dens, x[1] - x[0]), 1.0, 1e-4) << v.name();
  }
}

TEST(Skew, DensityIntegratesToOneWithOneGroup) {
  auto model = fixtures::one_group_target(skewed_prior(), skewed_local());
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  std::vector<double> lambda(layout.size(), 0.0);
  lambda[layout.mu_g_offset()] = 0.3;
  lambda[layout.t_g_offset()] = std::log(1.2);
  lambda[layout.m_offset(0)] = -0.4;
  lambda[layout.t_gi_offset(0)] = 0.6;
  lambda[layout.f_offset(0)] = 0.2;
  lambda[layout.b_offset(0)] = 0.3;
  const auto p = unpack<double>(layout, lambda);
  const double sd_g = 1.0 / 1.2;
  const auto outer = oracle::grid(0.3 - 10 * sd_g, 0.3 + 10 * sd_g, 601);
  for (const auto& v : all_variants()) {
    auto pv = p;
    pv.base = v.base;
    oracle::Vec marginal;
    for (double g : outer) {
      const auto c = conditional(pv, 0, std::span<const double>(&g, 1));
      const double sd_b = 1.0 / c.t.diag(0);
      const auto inner = oracle::grid(c.mu[0] - 10 * sd_b, c.mu[0] + 10 * sd_b, 601);
      oracle::Vec dens;
      for (double b : inner) dens.push_back(std::exp(log_q_at(*model, pv, v, {g, b})));
      marginal.push_back(oracle::trapezoid(dens, inner[1] - inner[0]));
    }
    EXPECT_NEAR(oracle::trapezoid(marginal, outer[1] - outer[0]), 1.0, 1e-4) << v.name();
  }
}

TEST(Skew, SamplerMatchesDensityOnOneDimensionalTargets) {
  struct Target {
    const char* name;
    std::unique_ptr<HierarchicalModel> model;
  };
  std::vector<Target> targets;
  targets.push_back({"gaussian", fixtures::global_target([](auto x) {
                       return -0.5 * (x - 0.5) * (x - 0.5) / 1.44;
                     })});
  targets.push_back({"exp-skewed", fixtures::global_target([](auto x) {
                       using std::exp;
                       return x - exp(x);
                     })});
  targets.push_back({"bimodal", fixtures::global_target([](auto x) {
                       using gloss::log_sum_exp;
                       const auto a = -0.5 * (x + 1.0) * (x + 1.0) / 0.36;
                       const auto b = -0.5 * (x - 1.5) * (x - 1.5) / 0.36;
                       return log_sum_exp(std::log(0.7) + a, std::log(0.3) + b);
                     })});
  const double mu = 0.2;
  const double t = 1.0 / 1.3;
  for (auto& target : targets) {
    const ParamLayout layout(target.model->signature(), VariantSpec::Base::kCsg);
    const auto p = unpack<double>(layout, std::vector<double>{mu, std::log(t)});
    const auto draws = sample_matrix(*target.model, p, variants::kGlossva, 10000, 4242);
    const auto x = oracle::grid(mu - 12 / t, mu + 12 / t, 20001);
    oracle::Vec logd;
    for (double xv : x) logd.push_back(log_q_at(*target.model, p, variants::kGlossva, {xv}));
    const auto ref = oracle::inverse_cdf_draws(x, logd, 10000, 777);
    const auto ks = ks_two_sample(column(draws, 0), ref);
    EXPECT_GT(ks.p_value, 0.01) << target.name << " D=" << ks.statistic;
  }
}

TEST(Skew, UnskewedVariantNeverReflects) {
  const auto model = fixtures::small_model(ModelKind::kLogistic, 3);
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  const auto p = unpack<double>(layout, fixtures::random_lambda(layout, 2));
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Draw d = sample(*model, p, variants::kCsgva, 5, s);
    EXPECT_FALSE(d.reflected_global);
    for (bool r : d.reflected_local) EXPECT_FALSE(r);
    // base transform: theta_G = mu_G + T_G^{-T} eps
    const auto t_g = star_inverse(p.t_g_star);
    auto expected = tri_solve<double>(t_g, d.noise.global, Side::kTranspose);
    for (std::size_t k = 0; k < expected.size(); ++k)
      EXPECT_NEAR(d.theta_g[k], expected[k] + p.mu_g[k], 1e-14);
  }
}

TEST(Skew, SymmetricTargetReflectsHalfTheTime) {
  auto model = fixtures::global_target([](auto x) { return -0.5 * (x - 1.0) * (x - 1.0); });
  const ParamLayout layout(model->signature(), VariantSpec::Base::kCsg);
  const auto p = unpack<double>(layout, std::vector<double>{1.0, 0.3});
  std::size_t reflected = 0;
  for (std::uint64_t s = 0; s < 10000; ++s)
    reflected += sample(*model, p, variants::kGlossva, 21, s).reflected_global ? 1 : 0;
  EXPECT_NEAR(reflected / 10000.0, 0.5, 0.02);
}

TEST(Skew, PosthocWrapSharesLambda) {
  const std::vector<double> lambda{1.0, 2.0, 3.0};
  const auto view = posthoc_wrap(lambda, variants::kGva, variants::kGvaHPosthoc);
  EXPECT_EQ(view.lambda, lambda);
  EXPECT_EQ(view.variant, variants::kGvaHPosthoc);
  EXPECT_NO_THROW(posthoc_wrap(lambda, variants::kGva, variants::kGvaGPosthoc));
  EXPECT_NO_THROW(posthoc_wrap(lambda, variants::kCsgva, variants::kCsgvaHPosthoc));
  EXPECT_THROW(posthoc_wrap(lambda, variants::kCsgva, variants::kGvaHPosthoc),
               std::invalid_argument);
  EXPECT_THROW(posthoc_wrap(lambda, variants::kGlossva, variants::kCsgvaHPosthoc),
               std::invalid_argument);
  EXPECT_THROW(posthoc_wrap(lambda, variants::kGva, variants::kGvaGLearned),
               std::invalid_argument);
}

TEST(Skew, PosthocDrawsDifferButMatchOnSymmetricTarget) {
  // skewed local target: the correction changes draws
  const auto model = fixtures::small_model(ModelKind::kPoisson, 2);
  const ParamLayout layout(model->signature(), VariantSpec::Base::kGaussian);
  const auto p = unpack<double>(layout, fixtures::random_lambda(layout, 1));
  const auto base = sample_matrix(*model, p, variants::kGva, 200, 3);
  const auto view = sample_matrix(*model, p, variants::kGvaHPosthoc, 200, 3);
  EXPECT_NE(std::vector<double>(base.data().begin(), base.data().end()),
            std::vector<double>(view.data().begin(), view.data().end()));

  // symmetric target: post-hoc draws follow the base distribution
  auto sym = fixtures::one_group_target([](auto g) { return -0.5 * g * g; },
                                        [](auto b, auto g) { return -0.5 * (b - g) * (b - g); });
  const ParamLayout l1(sym->signature(), VariantSpec::Base::kGaussian);
  std::vector<double> lam(l1.size(), 0.0);
  lam[l1.t_gi_offset(0)] = -1.0;
  const auto ps = unpack<double>(l1, lam);
  const auto a = sample_matrix(*sym, ps, variants::kGva, 10000, 10);
  const auto b = sample_matrix(*sym, ps, variants::kGvaHPosthoc, 10000, 11);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_GT(ks_two_sample(column(a, k), column(b, k)).p_value, 0.01);
}

TEST(Skew, GlobalPosthocCorrectionReducesKl) {
  const auto f = [](auto x) {
    using std::exp;
    return x - exp(x);  // normalized density
  };
  auto model = fixtures::global_target(f);
  const ParamLayout layout(model->signature(), VariantSpec::Base::kGaussian);
  // Laplace approximation: mode 0, curvature 1
  const auto p = unpack<double>(layout, std::vector<double>{0.0, 0.0});
  const auto x = oracle::grid(-12.0, 12.0, 24001);
  const auto kl = [&](const VariantSpec& v) {
    oracle::Vec integrand;
    for (double xv : x) {
      const double lq = log_q_at(*model, p, v, {xv});
      integrand.push_back(std::exp(lq) * (lq - f(xv)));
    }
    return oracle::trapezoid(integrand, x[1] - x[0]);
  };
  const double base = kl(variants::kGva);
  const double corrected = kl(variants::kGvaGPosthoc);
  EXPECT_GT(base, 0.0);
  EXPECT_LT(corrected, base);
}

TEST(Skew, HTildeEqualsMarginalKernelOnConjugateModel) {
  const auto data = fixtures::conjugate_data();
  const LinearGaussianModel model(data);
  const auto post = fixtures::conjugate_oracle(data);
  const ParamLayout layout(model.signature(), VariantSpec::Base::kGaussian);
  const auto p = unpack<double>(layout, fixtures::conjugate_lambda(layout, post));
  std::vector<double> diffs;
  for (double a : oracle::grid(-2.0, 3.0, 21)) {
    for (double b : oracle::grid(-2.0, 2.0, 21)) {
      const std::vector<double> g{a, b};
      diffs.push_back(log_h_tilde<double>(model, p, g) - post.log_marginal_kernel(g));
    }
  }
  const auto [lo, hi] = std::minmax_element(diffs.begin(), diffs.end());
  EXPECT_LT(*hi - *lo, 1e-6);
}
