#include "gloss/mcmc.hpp"

#include <cmath>
#include <iostream>
#include <thread>

#include "gloss/rng.hpp"

namespace gloss {

void McmcConfig::validate() const {
  if (iterations == 0) throw std::invalid_argument("mcmc: iterations must be positive");
  if (burn_in >= iterations) throw std::invalid_argument("mcmc: burn_in must be < iterations");
  if (thin == 0) throw std::invalid_argument("mcmc: thin must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw std::invalid_argument("mcmc: target_accept must lie in (0, 1)");
  }
  if (adapt_window == 0) throw std::invalid_argument("mcmc: adapt_window must be >= 1");
  if (chains == 0) throw std::invalid_argument("mcmc: chains must be >= 1");
}

namespace {

constexpr double kScaleFloor = 1e-8;

// Running mean and covariance (Welford).
struct RunningCovariance {
  explicit RunningCovariance(std::size_t dim) : mean(dim, 0.0), scatter(dim, dim) {}
  void add(const std::vector<double>& x) {
    ++count;
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> delta(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      delta[k] = x[k] - mean[k];
      mean[k] += delta[k] * inv;
    }
    for (std::size_t r = 0; r < x.size(); ++r)
      for (std::size_t c = 0; c <= r; ++c) scatter(r, c) += delta[r] * (x[c] - mean[c]);
  }
  Matrix<double> covariance() const {
    const std::size_t d = mean.size();
    Matrix<double> cov(d, d);
    const double denom = static_cast<double>(count > 1 ? count - 1 : 1);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c <= r; ++c) cov(r, c) = cov(c, r) = scatter(r, c) / denom;
    return cov;
  }
  std::vector<double> mean;
  Matrix<double> scatter;  // lower triangle
  std::size_t count = 0;
};

}  // namespace

ChainOutput run_mcmc(const HierarchicalModel& model, const McmcConfig& config,
                     std::vector<double> init) {
  config.validate();
  const ModelSignature& sig = model.signature();
  const std::size_t dim = sig.total_dim();
  if (init.empty()) init.assign(dim, 0.0);
  if (init.size() != dim) throw DimensionError("mcmc: initial point has the wrong length");

  std::vector<double> x = std::move(init);
  double lp = log_h_joint(model, x);
  if (!std::isfinite(lp)) throw std::domain_error("mcmc: log density is not finite at the start");

  Stream rng(config.seed, 0, 0x5eed);
  Matrix<double> chol = Matrix<double>::identity(dim);
  double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
  RunningCovariance running(dim);
  const std::size_t cov_start = config.burn_in / 5;
  bool have_covariance = false;

  ChainOutput out;
  out.labels = sig.labels();
  const std::size_t kept = (config.iterations - config.burn_in) / config.thin;
  out.draws = Matrix<double>(kept, dim);
  std::size_t row = 0;
  std::size_t window_accepts = 0;
  std::size_t window_len = 0;
  std::size_t post_accepts = 0;

  std::vector<double> z(dim);
  std::vector<double> proposal(dim);
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const bool adapting = t < config.burn_in;
    for (double& v : z) v = rng.normal();
    const double s = std::exp(log_scale);
    for (std::size_t r = 0; r < dim; ++r) {
      double step = 0.0;
      for (std::size_t c = 0; c <= r; ++c) step += chol(r, c) * z[c];
      proposal[r] = x[r] + s * step;
    }
    const double lp_new = log_h_joint(model, proposal);
    const double log_alpha = std::isfinite(lp_new) ? std::min(0.0, lp_new - lp) : -INFINITY;
    const bool accept = std::log(rng.uniform()) < log_alpha;
    if (accept) {
      x.swap(proposal);
      lp = lp_new;
      ++window_accepts;
      if (!adapting) ++post_accepts;
    }
    ++window_len;

    if (adapting) {
      const double gamma = std::pow(static_cast<double>(t) + 1.0, -0.6);
      log_scale += gamma * (std::exp(log_alpha) - config.target_accept);
      if (t >= cov_start) running.add(x);
    }

    if (window_len == config.adapt_window || t + 1 == config.burn_in ||
        t + 1 == config.iterations) {
      out.acceptance_trace.push_back(static_cast<double>(window_accepts) /
                                     static_cast<double>(window_len));
      if (adapting && window_accepts == 0) {
        log_scale = std::max(log_scale - std::log(10.0), std::log(kScaleFloor));
        const std::string msg = "mcmc: window ending at iteration " + std::to_string(t + 1) +
                                " rejected every proposal; scale reduced to " +
                                std::to_string(std::exp(log_scale));
        out.warnings.push_back(msg);
        std::cerr << "warning: " << msg << '\n';
      }
      if (adapting && running.count > 2 * dim + 10) {
        Matrix<double> cov = running.covariance();
        double mean_diag = 0.0;
        for (std::size_t k = 0; k < dim; ++k) mean_diag += cov(k, k);
        mean_diag /= static_cast<double>(dim);
        for (std::size_t k = 0; k < dim; ++k) cov(k, k) += 1e-6 * mean_diag + 1e-12;
        try {
          chol = cholesky(cov);
          // The identity-based scale means nothing for the new factor.
          if (!have_covariance) log_scale = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
          have_covariance = true;
        } catch (const std::domain_error&) {
          // keep the previous factor
        }
      }
      out.scale_trace.push_back(std::exp(log_scale));
      window_accepts = 0;
      window_len = 0;
    }

    if (!adapting && (t - config.burn_in + 1) % config.thin == 0 && row < kept) {
      for (std::size_t k = 0; k < dim; ++k) out.draws(row, k) = x[k];
      ++row;
    }
  }
  out.acceptance_rate = static_cast<double>(post_accepts) /
                        static_cast<double>(config.iterations - config.burn_in);
  out.final_scale = std::exp(log_scale);
  out.ess.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) out.ess[k] = effective_sample_size(column(out.draws, k));
  return out;
}

ChainOutput run_chains(const HierarchicalModel& model, const McmcConfig& config) {
  config.validate();
  std::vector<ChainOutput> chains(config.chains);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(config.chains);
  for (std::size_t c = 0; c < config.chains; ++c) {
    pool.emplace_back([&, c] {
      try {
        McmcConfig cc = config;
        cc.seed = c == 0 ? config.seed : splitmix64(config.seed + c);
        chains[c] = run_mcmc(model, cc);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (chains.size() == 1) return std::move(chains.front());

  ChainOutput out;
  out.labels = chains.front().labels;
  const std::size_t dim = out.labels.size();
  std::size_t rows = 0;
  for (const auto& c : chains) rows += c.draws.rows();
  out.draws = Matrix<double>(rows, dim);
  out.ess.assign(dim, 0.0);
  std::size_t r0 = 0;
  for (const auto& c : chains) {
    for (std::size_t r = 0; r < c.draws.rows(); ++r)
      for (std::size_t k = 0; k < dim; ++k) out.draws(r0 + r, k) = c.draws(r, k);
    r0 += c.draws.rows();
    for (std::size_t k = 0; k < dim; ++k) out.ess[k] += c.ess[k];
    out.acceptance_trace.insert(out.acceptance_trace.end(), c.acceptance_trace.begin(),
                                c.acceptance_trace.end());
    out.scale_trace.insert(out.scale_trace.end(), c.scale_trace.begin(), c.scale_trace.end());
    out.warnings.insert(out.warnings.end(), c.warnings.begin(), c.warnings.end());
    out.acceptance_rate += c.acceptance_rate / static_cast<double>(chains.size());
  }
  out.final_scale = chains.front().final_scale;
  return out;
}

std::vector<Moments> summarize(const Matrix<double>& draws) {
  if (draws.rows() < 10) {
    throw std::invalid_argument("summarize: need at least 10 draws, got " +
                                std::to_string(draws.rows()));
  }
  std::vector<Moments> out;
  for (std::size_t k = 0; k < draws.cols(); ++k) out.push_back(moments(column(draws, k)));
  return out;
}

}  // namespace gloss
