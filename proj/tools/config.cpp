#include "config.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace gloss::cli {
namespace {

std::string where(const std::string& origin, const toml::source_region& src) {
  std::ostringstream os;
  os << origin;
  if (src.begin.line > 0) os << ":" << src.begin.line << ":" << src.begin.column;
  return os.str();
}

// Reads one table, remembering which keys were consumed so the leftovers can
// be reported.
class Section {
 public:
  Section(const toml::table* table, std::string name, const std::string& origin)
      : table_(table), name_(std::move(name)), origin_(origin) {}

  bool present() const { return table_ != nullptr; }
  bool has(const std::string& key) const { return table_ && table_->contains(key); }

  [[noreturn]] void fail(const toml::node& node, const std::string& key,
                         const std::string& what) const {
    throw ConfigError(where(origin_, node.source()) + ": " + name_ + "." + key + " " + what);
  }

  std::optional<std::string> string(const std::string& key) {
    const auto* n = take(key);
    if (!n) return std::nullopt;
    if (!n->is_string()) fail(*n, key, "must be a string");
    return n->as_string()->get();
  }

  std::optional<std::int64_t> integer(const std::string& key, std::int64_t min) {
    const auto* n = take(key);
    if (!n) return std::nullopt;
    if (!n->is_integer()) fail(*n, key, "must be an integer");
    const auto v = n->as_integer()->get();
    if (v < min) fail(*n, key, "must be at least " + std::to_string(min));
    return v;
  }

  std::optional<std::size_t> count(const std::string& key, std::int64_t min = 1) {
    const auto v = integer(key, min);
    if (!v) return std::nullopt;
    return static_cast<std::size_t>(*v);
  }

  std::optional<std::uint64_t> seed(const std::string& key) {
    const auto v = integer(key, 0);
    if (!v) return std::nullopt;
    return static_cast<std::uint64_t>(*v);
  }

  std::optional<double> real(const std::string& key, bool positive = false) {
    const auto* n = take(key);
    if (!n) return std::nullopt;
    double v;
    if (n->is_floating_point())
      v = n->as_floating_point()->get();
    else if (n->is_integer())
      v = static_cast<double>(n->as_integer()->get());
    else
      fail(*n, key, "must be a number");
    if (!std::isfinite(v)) fail(*n, key, "must be finite");
    if (positive && !(v > 0.0)) fail(*n, key, "must be positive");
    return v;
  }

  std::optional<bool> boolean(const std::string& key) {
    const auto* n = take(key);
    if (!n) return std::nullopt;
    if (!n->is_boolean()) fail(*n, key, "must be true or false");
    return n->as_boolean()->get();
  }

  std::optional<std::vector<double>> reals(const std::string& key) {
    const auto* n = take(key);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    if (!arr) fail(*n, key, "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) {
      if (e.is_floating_point())
        out.push_back(e.as_floating_point()->get());
      else if (e.is_integer())
        out.push_back(static_cast<double>(e.as_integer()->get()));
      else
        fail(e, key, "must be an array of numbers");
      if (!std::isfinite(out.back())) fail(e, key, "entries must be finite");
    }
    return out;
  }

  std::optional<std::vector<std::pair<std::string, const toml::node*>>> strings(
      const std::string& key) {
    const auto* n = take(key);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    if (!arr) fail(*n, key, "must be an array of strings");
    std::vector<std::pair<std::string, const toml::node*>> out;
    for (const auto& e : *arr) {
      if (!e.is_string()) fail(e, key, "must be an array of strings");
      out.emplace_back(e.as_string()->get(), &e);
    }
    return out;
  }

  const toml::node* node(const std::string& key) const {
    return table_ ? table_->get(key) : nullptr;
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (!used_.count(key))
        throw ConfigError(where(origin_, k.source()) + ": unknown key " + name_ + "." + key);
    }
  }

 private:
  const toml::node* take(const std::string& key) {
    used_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  const toml::table* table_;
  std::string name_;
  const std::string& origin_;
  std::set<std::string> used_;
};

template <class F>
auto convert(const Section& s, const toml::node* node, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    s.fail(*node, key, std::string("is invalid: ") + e.what());
  }
}

nlohmann::json seed_json(std::uint64_t s) { return s; }

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& origin,
                              const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ConfigError(where(origin, e.source()) + ": " + std::string(e.description()));
  }

  static const std::set<std::string> known = {"model", "simulate", "fit", "mcmc", "output"};
  for (const auto& [k, v] : root) {
    const std::string key(k.str());
    if (!known.count(key)) throw ConfigError(where(origin, k.source()) + ": unknown table [" + key + "]");
    if (!v.is_table()) throw ConfigError(where(origin, v.source()) + ": " + key + " must be a table");
  }

  ExperimentConfig cfg;
  cfg.origin = origin;

  Section model(root["model"].as_table(), "model", origin);
  if (!model.present()) throw ConfigError(origin + ": missing [model] table");
  if (const auto kind = model.string("kind")) {
    cfg.kind = convert(model, model.node("kind"), "kind", [&] { return parse_model_kind(*kind); });
  } else {
    throw ConfigError(origin + ": model.kind is required");
  }
  if (const auto prior = model.string("prior")) {
    if (cfg.kind != ModelKind::kLogistic)
      model.fail(*model.node("prior"), "prior", "only applies to the logistic model");
    cfg.options.logistic_prior = convert(model, model.node("prior"), "prior",
                                         [&] { return parse_logistic_prior(*prior); });
  }
  if (const auto csv = model.string("csv")) cfg.csv = base_dir / *csv;
  model.reject_unknown();

  Section sim(root["simulate"].as_table(), "simulate", origin);
  if (sim.present()) {
    if (cfg.csv) throw ConfigError(origin + ": give either model.csv or [simulate], not both");
    SimulationSpec spec;
    spec.kind = cfg.kind;
    spec.options = cfg.options;
    if (auto v = sim.count("groups")) spec.groups = *v;
    if (auto v = sim.count("obs_per_group")) spec.obs_per_group = *v;
    if (auto v = sim.reals("theta_g")) spec.theta_g = *v;
    if (auto v = sim.seed("seed")) spec.seed = *v;
    const bool lg = cfg.kind == ModelKind::kLinearGaussian;
    for (const char* key : {"prior_sd", "local_sd", "noise_sd"}) {
      if (sim.has(key) && !lg) sim.fail(*sim.node(key), key, "only applies to linear_gaussian");
    }
    if (auto v = sim.real("prior_sd", true)) spec.prior_sd = *v;
    if (auto v = sim.real("local_sd", true)) spec.local_sd = *v;
    if (auto v = sim.real("noise_sd", true)) spec.noise_sd = *v;
    sim.reject_unknown();
    cfg.simulate = spec;
  } else if (!cfg.csv) {
    throw ConfigError(origin + ": no data source; set model.csv or add a [simulate] table");
  }

  Section fit(root["fit"].as_table(), "fit", origin);
  if (auto v = fit.strings("variants")) {
    if (v->empty()) fit.fail(*fit.node("variants"), "variants", "must list at least one variant");
    cfg.variants.clear();
    std::set<std::string> seen;
    for (const auto& [name, node] : *v) {
      const auto spec = convert(fit, node, "variants", [&] { return parse_variant(name); });
      if (!seen.insert(spec.name()).second) fit.fail(*node, "variants", "lists " + spec.name() + " twice");
      cfg.variants.push_back(spec);
    }
  }
  auto& t = cfg.train;
  if (auto v = fit.count("iterations")) t.iterations = *v;
  if (auto v = fit.real("learning_rate", true)) t.learning_rate = *v;
  if (auto v = fit.seed("seed")) t.seed = *v;
  if (auto v = fit.count("monitor_stride", 0)) t.monitor_stride = *v;
  if (auto v = fit.count("monitor_samples")) t.monitor_samples = *v;
  if (auto v = fit.count("samples_per_step")) t.samples_per_step = *v;
  if (auto v = fit.count("restarts")) t.restarts = *v;
  if (auto v = fit.count("threads", 0)) t.threads = *v;
  if (auto v = fit.count("draws")) cfg.draws = *v;
  if (auto v = fit.string("gradient"))
    t.gradient = convert(fit, fit.node("gradient"), "gradient", [&] { return parse_gradient_estimator(*v); });
  if (auto v = fit.boolean("warm_start")) t.warm_start = *v;
  fit.reject_unknown();
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": [fit] " + e.what());
  }

  Section mcmc(root["mcmc"].as_table(), "mcmc", origin);
  auto& m = cfg.mcmc;
  if (auto v = mcmc.count("iterations")) m.iterations = *v;
  if (auto v = mcmc.count("burn_in", 0)) m.burn_in = *v;
  if (auto v = mcmc.count("thin")) m.thin = *v;
  if (auto v = mcmc.seed("seed")) m.seed = *v;
  if (auto v = mcmc.real("target_accept", true)) m.target_accept = *v;
  if (auto v = mcmc.count("adapt_window")) m.adapt_window = *v;
  if (auto v = mcmc.count("chains")) m.chains = *v;
  mcmc.reject_unknown();
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": [mcmc] " + e.what());
  }

  Section out(root["output"].as_table(), "output", origin);
  if (auto v = out.string("dir")) cfg.output_dir = base_dir / *v;
  out.reject_unknown();

  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string(), path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["model"]["kind"] = to_string(c.kind);
  if (c.kind == ModelKind::kLogistic)
    j["model"]["prior"] = c.options.logistic_prior == LogisticPrior::kHuangWand ? "huang_wand" : "normal_theta";
  if (c.csv) j["model"]["csv"] = c.csv->string();
  if (c.simulate) {
    const auto& s = *c.simulate;
    auto& js = j["simulate"];
    js["groups"] = s.groups;
    js["obs_per_group"] = s.obs_per_group;
    js["theta_g"] = s.theta_g;
    js["seed"] = seed_json(s.seed);
    if (c.kind == ModelKind::kLinearGaussian) {
      js["prior_sd"] = s.prior_sd;
      js["local_sd"] = s.local_sd;
      js["noise_sd"] = s.noise_sd;
    }
  }
  auto& jf = j["fit"];
  jf["variants"] = nlohmann::json::array();
  for (const auto& v : c.variants) jf["variants"].push_back(v.name());
  jf["iterations"] = c.train.iterations;
  jf["learning_rate"] = c.train.learning_rate;
  jf["seed"] = seed_json(c.train.seed);
  jf["monitor_stride"] = c.train.monitor_stride;
  jf["monitor_samples"] = c.train.monitor_samples;
  jf["samples_per_step"] = c.train.samples_per_step;
  jf["restarts"] = c.train.restarts;
  jf["threads"] = c.train.threads;
  jf["draws"] = c.draws;
  jf["gradient"] = to_string(c.train.gradient);
  jf["warm_start"] = c.train.warm_start;
  auto& jm = j["mcmc"];
  jm["iterations"] = c.mcmc.iterations;
  jm["burn_in"] = c.mcmc.burn_in;
  jm["thin"] = c.mcmc.thin;
  jm["seed"] = seed_json(c.mcmc.seed);
  jm["target_accept"] = c.mcmc.target_accept;
  jm["adapt_window"] = c.mcmc.adapt_window;
  jm["chains"] = c.mcmc.chains;
  j["output"]["dir"] = c.output_dir.string();
  return j;
}

std::unique_ptr<HierarchicalModel> build_model(const ExperimentConfig& c) {
  const Dataset data = c.csv ? load_csv(*c.csv, c.kind) : simulate(*c.simulate);
  return make_model(data, c.options);
}

}  // namespace gloss::cli
