#include "gloss/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <thread>

#include "gloss/csv.hpp"
#include "gloss/rng.hpp"
#include "json.hpp"

namespace gloss {

void TrainConfig::validate() const {
  if (iterations == 0) throw std::invalid_argument("train: iterations must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: Adam moments must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("train: epsilon must be positive");
  if (samples_per_step == 0) throw std::invalid_argument("train: samples_per_step must be >= 1");
  if (restarts == 0) throw std::invalid_argument("train: restarts must be >= 1");
  if (monitor_stride > 0 && monitor_samples == 0) {
    throw std::invalid_argument("train: monitor_samples must be >= 1");
  }
  if (!(clip > 0.0)) throw std::invalid_argument("train: clip must be positive");
}

std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GLOSS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Key spaces derived from the user seed.
constexpr std::uint64_t kInitKey = 0x1A1;
constexpr std::uint64_t kNoiseKey = 0x2B2;
constexpr std::uint64_t kMonitorKey = 0x3C3;

std::uint64_t derive(std::uint64_t seed, std::uint64_t key) { return splitmix64(seed ^ (key << 40)); }

// Runs f(0..count-1) on up to `workers` threads; results land by index.
template <class F>
void parallel_for(std::size_t count, std::size_t workers, F&& f) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) f(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k; (k = next++) < count;) {
        try {
          f(k);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct Trainer {
  const HierarchicalModel& model;
  VariantSpec objective;
  std::vector<VariantSpec> monitored;  // objective first
  TrainConfig config;
  ParamLayout layout;
  std::vector<bool> mask;

  Trainer(const HierarchicalModel& m, VariantSpec obj, std::vector<VariantSpec> views,
          TrainConfig cfg)
      : model(m), objective(obj), config(std::move(cfg)), layout(m.signature(), obj.base) {
    monitored.push_back(objective);
    monitored.insert(monitored.end(), views.begin(), views.end());
    mask = layout.free_mask();
  }

  // Mean gradient over samples_per_step draws for step t; retries a draw with
  // fresh noise when its trace leaves the domain.
  std::vector<double> gradient(const std::vector<double>& lambda, std::uint64_t noise_seed,
                               std::size_t t, double& value, std::size_t& retried) const {
    const std::size_t spp = config.samples_per_step;
    const std::size_t attempts = config.max_retries + 1;
    std::vector<ElboSample> samples(spp);
    std::vector<std::size_t> retries(spp, 0);
    auto one = [&](std::size_t s) {
      std::string last_error;
      for (std::size_t a = 0; a < attempts; ++a) {
        const std::uint64_t index = (static_cast<std::uint64_t>(t) * spp + s) * attempts + a;
        try {
          ElboSample es = elbo_gradient(model, layout, lambda, objective,
                                        draw_noise(layout, noise_seed, index), config.gradient);
          const bool finite = std::isfinite(es.value) &&
                              std::all_of(es.gradient.begin(), es.gradient.end(),
                                          [](double g) { return std::isfinite(g); });
          if (!finite) {
            last_error = "non-finite gradient";
          } else {
            samples[s] = std::move(es);
            retries[s] = a;
            return;
          }
        } catch (const ad::TraceInvalid& e) {
          last_error = e.what();
        } catch (const std::domain_error& e) {
          last_error = e.what();
        }
      }
      throw TrainingError(objective.name() + ": iteration " + std::to_string(t) + ": " +
                          std::to_string(attempts) + " attempts failed (" + last_error + ")");
    };
    parallel_for(spp, spp > 1 ? worker_count(config.threads) : 1, one);

    std::vector<double> g(layout.size(), 0.0);
    value = 0.0;
    for (std::size_t s = 0; s < spp; ++s) {
      value += samples[s].value / static_cast<double>(spp);
      for (std::size_t k = 0; k < g.size(); ++k)
        g[k] += samples[s].gradient[k] / static_cast<double>(spp);
      retried += retries[s] > 0 ? 1 : 0;
    }
    return g;
  }

  void monitor(std::vector<std::vector<TracePoint>>& traces, const std::vector<double>& lambda,
               std::size_t iteration, std::uint64_t monitor_seed) const {
    const auto p = unpack<double>(layout, lambda);
    for (std::size_t v = 0; v < monitored.size(); ++v) {
      const auto est =
          elbo_estimate(model, p, monitored[v], config.monitor_samples, monitor_seed);
      traces[v].push_back(TracePoint{iteration, est.mean, est.se});
    }
  }

  std::vector<FitResult> run(std::uint64_t seed, const std::vector<double>* init = nullptr,
                             double prior_seconds = 0.0) const {
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> lambda =
        init ? *init : init_params(model, objective, derive(seed, kInitKey));
    const std::uint64_t noise_seed = derive(seed, kNoiseKey);
    const std::uint64_t monitor_seed = derive(seed, kMonitorKey);
    std::vector<double> m1(lambda.size(), 0.0);
    std::vector<double> m2(lambda.size(), 0.0);
    std::vector<std::vector<TracePoint>> traces(monitored.size());
    std::vector<double> steps;
    if (config.record_steps) steps.reserve(config.iterations);
    std::size_t retried = 0;
    double b1t = 1.0;
    double b2t = 1.0;

    if (config.monitor_stride > 0) monitor(traces, lambda, 0, monitor_seed);
    for (std::size_t t = 0; t < config.iterations; ++t) {
      double value = 0.0;
      std::vector<double> g = gradient(lambda, noise_seed, t, value, retried);
      if (config.record_steps) steps.push_back(value);

      double norm = 0.0;
      for (double gk : g) norm = std::max(norm, std::abs(gk));
      if (norm > config.clip) {
        const double scale = config.clip / norm;
        for (double& gk : g) gk *= scale;
      }

      b1t *= config.beta1;
      b2t *= config.beta2;
      for (std::size_t k = 0; k < lambda.size(); ++k) {
        if (!mask[k]) continue;
        m1[k] = config.beta1 * m1[k] + (1.0 - config.beta1) * g[k];
        m2[k] = config.beta2 * m2[k] + (1.0 - config.beta2) * g[k] * g[k];
        const double mhat = m1[k] / (1.0 - b1t);
        const double vhat = m2[k] / (1.0 - b2t);
        lambda[k] += config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
      }

      const std::size_t done = t + 1;
      if (config.monitor_stride > 0 &&
          (done % config.monitor_stride == 0 || done == config.iterations)) {
        monitor(traces, lambda, done, monitor_seed);
      }
    }
    const double seconds =
        prior_seconds +
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::vector<FitResult> out;
    for (std::size_t v = 0; v < monitored.size(); ++v) {
      FitResult r;
      r.variant = monitored[v];
      r.fitted = objective;
      r.layout = layout;
      r.lambda = lambda;
      r.trace = std::move(traces[v]);
      if (v == 0) r.step_elbo = steps;
      r.seconds = seconds;
      r.retried_steps = retried;
      r.config = config;
      out.push_back(std::move(r));
    }
    return out;
  }
};

double final_score(const HierarchicalModel& model, const FitResult& r) {
  if (!r.trace.empty()) return r.trace.back().elbo;
  const auto p = unpack<double>(r.layout, r.lambda);
  return elbo_estimate(model, p, r.fitted, 100, derive(r.config.seed, kMonitorKey)).mean;
}

}  // namespace

std::vector<double> init_params(const HierarchicalModel& model, const VariantSpec& variant,
                                std::uint64_t seed) {
  const ParamLayout layout(model.signature(), variant.base);
  std::vector<double> lambda(layout.size(), 0.0);
  constexpr double kJitter = 0.01;
  Stream g(seed, 0, 0);
  for (std::size_t k = 0; k < layout.global_dim(); ++k) lambda[k] = kJitter * g.normal();
  for (std::size_t i = 0; i < layout.groups(); ++i) {
    Stream s(seed, 0, i + 1);
    for (std::size_t k = 0; k < layout.local_dims()[i]; ++k)
      lambda[layout.m_offset(i) + k] = kJitter * s.normal();
  }
  return lambda;
}

std::vector<FitResult> fit_with_views(const HierarchicalModel& model, const VariantSpec& base,
                                      const std::vector<VariantSpec>& views,
                                      const TrainConfig& config) {
  config.validate();
  base.validate();
  for (const auto& v : views) {
    v.validate();
    if (!(v.posthoc() && v.objective() == base.objective() && !base.posthoc())) {
      throw std::invalid_argument("fit: " + v.name() + " is not a post-hoc view of " +
                                  base.name());
    }
  }
  if (base.skew != VariantSpec::Skew::kNone && !views.empty()) {
    throw std::invalid_argument("fit: post-hoc views need an unskewed base");
  }
  const Trainer trainer(model, base, views, config);
  const bool warm = config.warm_start && base.skew != VariantSpec::Skew::kNone;
  const VariantSpec unskewed{base.base, VariantSpec::Skew::kNone, VariantSpec::Fit::kLearned};
  std::vector<FitResult> best;
  double best_score = -INFINITY;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    const std::uint64_t seed = r == 0 ? config.seed : derive(config.seed + r, 0x4D4);
    std::vector<FitResult> results;
    if (warm) {
      const auto first = Trainer(model, unskewed, {}, config).run(seed).front();
      results = trainer.run(seed, &first.lambda, first.seconds);
    } else {
      results = trainer.run(seed);
    }
    const double score = final_score(model, results.front());
    if (best.empty() || score > best_score) {
      best_score = score;
      best = std::move(results);
    }
  }
  return best;
}

FitResult fit(const HierarchicalModel& model, const VariantSpec& variant,
              const TrainConfig& config) {
  variant.validate();
  if (variant.posthoc()) {
    return fit_with_views(model, variant.objective(), {variant}, config).back();
  }
  return fit_with_views(model, variant, {}, config).front();
}

std::vector<FitResult> run_ladder(const HierarchicalModel& model, const TrainConfig& config,
                                  const std::vector<VariantSpec>& variants) {
  // One job per optimized objective, carrying the post-hoc views that share it.
  struct Job {
    VariantSpec objective;
    std::vector<VariantSpec> views;
  };
  std::vector<Job> jobs;
  for (const auto& v : variants) {
    v.validate();
    const VariantSpec obj = v.objective();
    auto it = std::find_if(jobs.begin(), jobs.end(),
                           [&](const Job& j) { return j.objective == obj; });
    if (it == jobs.end()) {
      jobs.push_back(Job{obj, {}});
      it = jobs.end() - 1;
    }
    if (v.posthoc() &&
        std::find(it->views.begin(), it->views.end(), v) == it->views.end()) {
      it->views.push_back(v);
    }
  }

  std::vector<std::vector<FitResult>> done(jobs.size());
  parallel_for(jobs.size(), worker_count(config.threads), [&](std::size_t k) {
    done[k] = fit_with_views(model, jobs[k].objective, jobs[k].views, config);
  });

  std::vector<FitResult> out;
  for (const auto& v : variants) {
    bool found = false;
    for (const auto& results : done) {
      for (const auto& r : results) {
        if (r.variant == v) {
          out.push_back(r);
          found = true;
          break;
        }
      }
      if (found) break;
    }
  }
  return out;
}

void save_fit(const FitResult& result, const std::string& model_kind,
              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_lambda(dir / "lambda.bin",
              LambdaFile{result.layout, result.lambda, result.variant.name(), model_kind,
                         result.config.seed});

  const TrainConfig& c = result.config;
  nlohmann::json j;
  j["variant"] = result.variant.name();
  j["fitted"] = result.fitted.name();
  j["model"] = model_kind;
  j["seconds"] = result.seconds;
  j["retried_steps"] = result.retried_steps;
  j["parameters"] = {{"total", result.layout.size()}, {"free", result.layout.free_count()}};
  j["config"] = {{"iterations", c.iterations},
                 {"learning_rate", c.learning_rate},
                 {"beta1", c.beta1},
                 {"beta2", c.beta2},
                 {"epsilon", c.epsilon},
                 {"seed", c.seed},
                 {"monitor_stride", c.monitor_stride},
                 {"monitor_samples", c.monitor_samples},
                 {"samples_per_step", c.samples_per_step},
                 {"clip", c.clip},
                 {"restarts", c.restarts},
                 {"gradient", to_string(c.gradient)},
                 {"warm_start", c.warm_start}};
  if (!result.trace.empty()) {
    j["final_elbo"] = {{"mean", result.trace.back().elbo}, {"se", result.trace.back().se}};
  }
  std::ofstream(dir / "fit.json") << j.dump(2) << '\n';

  std::ofstream trace(dir / "elbo_trace.csv");
  csv::write_row(trace, {"variant", "iteration", "elbo", "elbo_se"});
  for (const auto& tp : result.trace) {
    csv::write_row(trace, {result.variant.name(), std::to_string(tp.iteration),
                           csv::format(tp.elbo), csv::format(tp.se)});
  }
  if (!trace) throw std::runtime_error("failed writing " + (dir / "elbo_trace.csv").string());
}

}  // namespace gloss
