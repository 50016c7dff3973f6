#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "gloss/csv.hpp"
#include "gloss/diagnostics.hpp"
#include "gloss/skew.hpp"

#ifndef GLOSS_VERSION
#define GLOSS_VERSION "unknown"
#endif

namespace gloss::cli {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> variants;
  std::string lambda;
  std::optional<std::size_t> count;
  std::string variant;
  std::string vi;
  std::string oracle;
};

struct Context {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
  Options opt;
};

json manifest(const Context& ctx, const std::string& command, const ExperimentConfig* cfg) {
  json j;
  j["tool"] = "gloss";
  j["version"] = GLOSS_VERSION;
  j["command"] = command;
  j["argv"] = ctx.args;
  if (cfg) {
    j["config_file"] = cfg->origin;
    j["config"] = to_json(*cfg);
  }
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  f << j.dump(2) << '\n';
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

ExperimentConfig load(const Context& ctx) {
  if (ctx.opt.config.empty()) throw UsageError("--config is required");
  auto cfg = load_config(ctx.opt.config);
  if (!ctx.opt.out.empty()) cfg.output_dir = ctx.opt.out;
  if (!ctx.opt.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : ctx.opt.variants) {
      try {
        cfg.variants.push_back(parse_variant(v));
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--variants: ") + e.what());
      }
    }
  }
  return cfg;
}

std::string describe(const HierarchicalModel& model) {
  const auto& s = model.signature();
  std::size_t locals = 0;
  for (auto d : s.local_dims) locals += d;
  return std::to_string(s.groups) + " groups, d = " + std::to_string(s.global_dim) +
         ", " + std::to_string(locals) + " local coordinates";
}

int cmd_fit(Context& ctx) {
  const auto t0 = Clock::now();
  auto cfg = load(ctx);
  if (ctx.opt.seed) cfg.train.seed = *ctx.opt.seed;
  const auto model = build_model(cfg);
  ctx.err << "fit: " << to_string(cfg.kind) << " model, " << describe(*model) << "\n";

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const auto results = run_ladder(*model, cfg.train, cfg.variants);

  const DrawTable empty{model->signature().labels(), {}};
  json timings;
  json outputs = json::array();
  for (const auto& r : results) {
    const auto sub = dir / r.variant.slug();
    save_fit(r, to_string(cfg.kind), sub);
    DrawTable draws = empty;
    // one sampling seed for every variant: post-hoc views share their draws' base noise
    draws.draws = sample_matrix(*model, unpack<double>(r.layout, r.lambda), r.variant,
                                cfg.draws, cfg.train.seed);
    write_draws(sub / "draws.csv", draws);

    auto m = manifest(ctx, "fit", &cfg);
    m["variant"] = r.variant.name();
    m["fitted"] = r.fitted.name();
    m["seeds"] = {{"fit", cfg.train.seed}, {"draws", cfg.train.seed}};
    m["timings"] = {{"fit_seconds", r.seconds}};
    write_json(sub / "manifest.json", m);

    timings[r.variant.name()] = r.seconds;
    outputs.push_back(sub.filename().string());
    ctx.err << "fit: " << r.variant.name();
    if (!r.trace.empty())
      ctx.err << " ELBO " << r.trace.back().elbo << " (se " << r.trace.back().se << ")";
    ctx.err << ", " << r.seconds << " s";
    if (r.retried_steps) ctx.err << ", " << r.retried_steps << " retried steps";
    ctx.err << "\n";
  }

  auto m = manifest(ctx, "fit", &cfg);
  m["seeds"] = {{"fit", cfg.train.seed}, {"draws", cfg.train.seed}};
  if (cfg.simulate) m["seeds"]["simulate"] = cfg.simulate->seed;
  m["workers"] = worker_count(cfg.train.threads);
  m["timings"] = {{"variants", timings}, {"total_seconds", seconds_since(t0)}};
  m["outputs"] = outputs;
  write_json(dir / "manifest.json", m);
  ctx.out << dir.string() << "\n";
  return 0;
}

int cmd_mcmc(Context& ctx) {
  const auto t0 = Clock::now();
  auto cfg = load(ctx);
  if (ctx.opt.seed) cfg.mcmc.seed = *ctx.opt.seed;
  const auto model = build_model(cfg);
  ctx.err << "mcmc: " << to_string(cfg.kind) << " model, " << describe(*model) << ", "
          << cfg.mcmc.chains << " chain(s) of " << cfg.mcmc.iterations << " iterations\n";

  const auto chain = run_chains(*model, cfg.mcmc);
  const fs::path dir = cfg.output_dir / "mcmc";
  fs::create_directories(dir);
  write_draws(dir / "draws.csv", DrawTable{chain.labels, chain.draws});

  json info;
  info["acceptance_rate"] = chain.acceptance_rate;
  info["final_scale"] = chain.final_scale;
  info["retained_draws"] = chain.draws.rows();
  info["ess"] = json::object();
  for (std::size_t k = 0; k < chain.labels.size(); ++k) info["ess"][chain.labels[k]] = chain.ess[k];
  info["acceptance_trace"] = chain.acceptance_trace;
  info["scale_trace"] = chain.scale_trace;
  info["warnings"] = chain.warnings;
  write_json(dir / "chain.json", info);

  for (const auto& w : chain.warnings) ctx.err << "mcmc: warning: " << w << "\n";
  ctx.err << "mcmc: acceptance " << chain.acceptance_rate << ", " << chain.draws.rows()
          << " draws retained\n";

  auto m = manifest(ctx, "mcmc", &cfg);
  m["seeds"] = {{"mcmc", cfg.mcmc.seed}};
  if (cfg.simulate) m["seeds"]["simulate"] = cfg.simulate->seed;
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json(dir / "manifest.json", m);
  ctx.out << dir.string() << "\n";
  return 0;
}

int cmd_sample(Context& ctx) {
  const auto t0 = Clock::now();
  if (ctx.opt.lambda.empty()) throw UsageError("--lambda is required");
  if (ctx.opt.out.empty()) throw UsageError("--out is required");
  auto cfg = load(ctx);
  const auto file = load_lambda(ctx.opt.lambda);
  if (file.model != to_string(cfg.kind))
    throw std::runtime_error("lambda file was fitted to a " + file.model + " model, config says " +
                             to_string(cfg.kind));
  const auto model = build_model(cfg);
  if (!(ParamLayout(model->signature(), file.layout.base()) == file.layout))
    throw std::runtime_error("lambda file layout does not match the configured model");

  VariantSpec variant = parse_variant(file.variant);
  if (!ctx.opt.variant.empty()) {
    try {
      variant = parse_variant(ctx.opt.variant);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--variant: ") + e.what());
    }
    if (variant.base != file.layout.base() || variant.objective() != parse_variant(file.variant).objective())
      throw UsageError("--variant " + variant.name() + " is not a view of " + file.variant);
  }
  const std::size_t count = ctx.opt.count.value_or(cfg.draws);
  const std::uint64_t seed = ctx.opt.seed.value_or(cfg.train.seed);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  DrawTable t{model->signature().labels(),
              sample_matrix(*model, unpack<double>(file.layout, file.lambda), variant, count, seed)};
  write_draws(dir / "draws.csv", t);

  auto m = manifest(ctx, "sample", &cfg);
  m["lambda"] = ctx.opt.lambda;
  m["variant"] = variant.name();
  m["count"] = count;
  m["seeds"] = {{"draws", seed}, {"fit", file.seed}};
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json(dir / "manifest.json", m);
  ctx.err << "sample: " << count << " draws from " << variant.name() << "\n";
  ctx.out << (dir / "draws.csv").string() << "\n";
  return 0;
}

std::vector<TraceRow> read_trace(const fs::path& path) {
  std::vector<TraceRow> rows;
  if (!fs::exists(path)) return rows;
  const auto t = csv::read(path);
  const auto v = t.column("variant"), it = t.column("iteration"), e = t.column("elbo"),
             se = t.column("elbo_se");
  for (const auto& r : t.rows)
    rows.push_back({r.fields[v], static_cast<std::size_t>(csv::parse_integer(r, it, "iteration")),
                    csv::parse_double(r, e, "elbo"), csv::parse_double(r, se, "elbo_se")});
  return rows;
}

int cmd_compare(Context& ctx) {
  const auto t0 = Clock::now();
  const auto& o = ctx.opt;
  std::optional<ExperimentConfig> cfg;
  if (!o.config.empty()) cfg = load(ctx);
  std::unique_ptr<HierarchicalModel> model;
  SigmaMap sigma;
  std::size_t global_dim = 0;
  if (cfg) {
    model = build_model(*cfg);
    sigma = sigma_map(*model);
    global_dim = model->signature().global_dim;
  }

  ComparisonReport report;
  fs::path dir;
  if (!o.vi.empty()) {
    // direct mode: one VI draw file against one reference file
    if (o.oracle.empty()) throw UsageError("--vi needs --oracle");
    if (o.out.empty() && !cfg) throw UsageError("--out is required");
    dir = o.out.empty() ? cfg->output_dir / "report" : fs::path(o.out);
    const auto name = o.variant.empty() ? fs::path(o.vi).stem().string() : o.variant;
    report = compare(name, read_draws(o.vi), read_draws(o.oracle), sigma, global_dim);
  } else {
    if (!cfg) throw UsageError("compare needs --config, or --vi and --oracle");
    const fs::path run = cfg->output_dir;
    dir = run / "report";
    const fs::path ref = o.oracle.empty() ? run / "mcmc" / "draws.csv" : fs::path(o.oracle);
    const auto oracle = read_draws(ref);
    for (const auto& v : cfg->variants) {
      const auto sub = run / v.slug();
      report.append(compare(v.name(), read_draws(sub / "draws.csv"), oracle, sigma, global_dim));
      const auto trace = read_trace(sub / "elbo_trace.csv");
      report.elbo_trace.insert(report.elbo_trace.end(), trace.begin(), trace.end());
      ctx.err << "compare: " << v.name() << "\n";
    }
  }
  export_report(report, dir);

  auto m = manifest(ctx, "compare", cfg ? &*cfg : nullptr);
  if (!o.vi.empty()) m["inputs"] = {{"vi", o.vi}, {"oracle", o.oracle}};
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json(dir / "manifest.json", m);
  ctx.out << dir.string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{args, out, err, {}};
  auto& o = ctx.opt;

  CLI::App app{"Skewed hierarchical variational inference"};
  app.name(args.empty() ? "gloss" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.set_version_flag("--version", GLOSS_VERSION);

  auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--config", o.config, "experiment TOML file");
    if (required) opt->required();
  };
  auto add_seed = [&](CLI::App* sub, const std::string& what) {
    sub->add_option("--seed", o.seed, "override the " + what + " seed");
  };

  auto* fit = app.add_subcommand("fit", "fit variational families");
  add_config(fit, true);
  add_seed(fit, "[fit]");
  fit->add_option("--out", o.out, "output directory (default: output.dir)");
  fit->add_option("--variants", o.variants, "comma-separated variant names or slugs")->delimiter(',');

  auto* mcmc = app.add_subcommand("mcmc", "run the reference sampler");
  add_config(mcmc, true);
  add_seed(mcmc, "[mcmc]");
  mcmc->add_option("--out", o.out, "output directory; draws go to <out>/mcmc");

  auto* sample = app.add_subcommand("sample", "draw from a fitted lambda");
  add_config(sample, true);
  add_seed(sample, "sampling");
  sample->add_option("--lambda", o.lambda, "lambda.bin written by fit")->required();
  sample->add_option("--count", o.count, "number of draws (default: fit.draws)");
  sample->add_option("--variant", o.variant, "view the lambda under a post-hoc correction");
  sample->add_option("--out", o.out, "output directory")->required();

  auto* cmp = app.add_subcommand("compare", "compare VI draws with reference draws");
  add_config(cmp, false);
  cmp->add_option("--out", o.out, "run directory (with --config) or report directory");
  cmp->add_option("--variants", o.variants, "restrict to these variants")->delimiter(',');
  cmp->add_option("--vi", o.vi, "VI draws CSV");
  cmp->add_option("--oracle", o.oracle, "reference draws CSV");
  cmp->add_option("--variant", o.variant, "label for --vi draws");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*fit) return cmd_fit(ctx);
    if (*mcmc) return cmd_mcmc(ctx);
    if (*sample) return cmd_sample(ctx);
    return cmd_compare(ctx);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace gloss::cli
