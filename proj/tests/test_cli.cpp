#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "gloss/csv.hpp"
#include "gloss/diagnostics.hpp"

using namespace gloss;
using namespace gloss::cli;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"([model]
kind = "logistic"

[simulate]
groups = 4
obs_per_group = 5
theta_g = [-1.0, 0.3, 0.5, -0.1, 0.0]
seed = 11

[fit]
variants = ["G-VA", "gva_h_posthoc", "GLOSS-VA"]
iterations = 300
monitor_stride = 100
monitor_samples = 5
draws = 200
seed = 3

[mcmc]
iterations = 3000
burn_in = 1000
thin = 10
adapt_window = 200
)";

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run gloss_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gloss");
  std::ostringstream out, err;
  Run r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("gloss_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto path = dir / "experiment.toml";
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Config error message for `text`, or "" if it parses.
std::string config_error(const std::string& text) {
  try {
    parse_config(text, "cfg.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) {
  return s.find(part) != std::string::npos;
}

}  // namespace

TEST(Config, ParsesAllSections) {
  const auto c = parse_config(kSmall, "cfg.toml", "/data");
  EXPECT_EQ(c.kind, ModelKind::kLogistic);
  ASSERT_TRUE(c.simulate);
  EXPECT_EQ(c.simulate->groups, 4u);
  EXPECT_EQ(c.simulate->theta_g.size(), 5u);
  EXPECT_EQ(c.simulate->seed, 11u);
  ASSERT_EQ(c.variants.size(), 3u);
  EXPECT_EQ(c.variants[1], variants::kGvaHPosthoc);
  EXPECT_EQ(c.train.iterations, 300u);
  EXPECT_EQ(c.train.seed, 3u);
  EXPECT_EQ(c.draws, 200u);
  EXPECT_EQ(c.mcmc.burn_in, 1000u);
  EXPECT_EQ(c.mcmc.adapt_window, 200u);
  EXPECT_EQ(c.train.gradient, GradientEstimator::kTotal);
  EXPECT_EQ(c.output_dir, fs::path("runs/default"));
}

TEST(Config, DefaultsAndPaths) {
  const auto c = parse_config(
      "[model]\nkind = \"poisson\"\ncsv = \"epilepsy.csv\"\n"
      "[fit]\ngradient = \"path\"\nwarm_start = true\nlearning_rate = 1\n"
      "[output]\ndir = \"out\"\n",
      "cfg.toml", "/data");
  EXPECT_EQ(c.csv, fs::path("/data/epilepsy.csv"));
  EXPECT_EQ(c.output_dir, fs::path("/data/out"));
  EXPECT_EQ(c.variants, ladder());
  EXPECT_EQ(c.train.gradient, GradientEstimator::kPath);
  EXPECT_TRUE(c.train.warm_start);
  EXPECT_EQ(c.train.learning_rate, 1.0);
  EXPECT_EQ(c.train.iterations, TrainConfig{}.iterations);
}

TEST(Config, UnknownKeysAreErrors) {
  const auto e = config_error(std::string(kSmall) + "\n[fit2]\nx = 1\n");
  EXPECT_TRUE(contains(e, "unknown table [fit2]")) << e;
  EXPECT_TRUE(contains(e, "cfg.toml:24")) << e;

  std::string typo = kSmall;
  typo.replace(typo.find("iterations = 300"), 16, "iteratons = 300");
  const auto t = config_error(typo);
  EXPECT_TRUE(contains(t, "unknown key fit.iteratons")) << t;
  EXPECT_TRUE(contains(t, "cfg.toml:12:")) << t;
}

TEST(Config, FieldDiagnostics) {
  const std::string head = "[model]\nkind = \"logistic\"\n[simulate]\ntheta_g = [0,0,0,0,0]\n";
  auto e = config_error(head + "[fit]\niterations = \"many\"\n");
  EXPECT_TRUE(contains(e, "cfg.toml:6:")) << e;
  EXPECT_TRUE(contains(e, "fit.iterations must be an integer")) << e;

  e = config_error(head + "[fit]\niterations = 0\n");
  EXPECT_TRUE(contains(e, "fit.iterations must be at least 1")) << e;

  e = config_error(head + "[fit]\nvariants = [\"G-VA\", \"G-VA^{H+}\"]\n");
  EXPECT_TRUE(contains(e, "fit.variants is invalid")) << e;

  e = config_error(head + "[fit]\nvariants = []\n");
  EXPECT_TRUE(contains(e, "at least one variant")) << e;

  e = config_error(head + "[fit]\nvariants = [\"gva\", \"G-VA\"]\n");
  EXPECT_TRUE(contains(e, "twice")) << e;

  e = config_error(head + "[fit]\nlearning_rate = -1\n");
  EXPECT_TRUE(contains(e, "fit.learning_rate must be positive")) << e;

  e = config_error(head + "[mcmc]\niterations = 10\nburn_in = 20\n");
  EXPECT_TRUE(contains(e, "[mcmc]")) << e;

  e = config_error("[model]\nkind = \"ising\"\n");
  EXPECT_TRUE(contains(e, "cfg.toml:2:")) << e;
  EXPECT_TRUE(contains(e, "model.kind")) << e;

  e = config_error("[model]\nkind = \"poisson\"\nprior = \"huang_wand\"\n");
  EXPECT_TRUE(contains(e, "only applies to the logistic model")) << e;

  e = config_error(head + "noise_sd = 2\n");
  EXPECT_TRUE(contains(e, "only applies to linear_gaussian")) << e;
}

TEST(Config, DataSourceRules) {
  EXPECT_TRUE(contains(config_error("[model]\nkind = \"logistic\"\n"), "no data source"));
  EXPECT_TRUE(contains(config_error("[model]\nkind = \"logistic\"\ncsv = \"a.csv\"\n[simulate]\n"),
                       "not both"));
  EXPECT_TRUE(contains(config_error("[simulate]\n"), "missing [model]"));
  EXPECT_TRUE(contains(config_error("[model]\ncsv = \"a.csv\"\n"), "model.kind is required"));
}

TEST(Config, SyntaxErrorsCarryLineNumbers) {
  const auto e = config_error("[model]\nkind = \"logistic\"\n\n[fit\n");
  EXPECT_TRUE(contains(e, "cfg.toml:4:")) << e;
}

TEST(Config, JsonEchoRoundTripsFields) {
  const auto c = parse_config(kSmall, "cfg.toml");
  const auto j = to_json(c);
  EXPECT_EQ(j["model"]["kind"], "logistic");
  EXPECT_EQ(j["fit"]["variants"].size(), 3u);
  EXPECT_EQ(j["fit"]["variants"][1], "G-VA^{H-}");
  EXPECT_EQ(j["simulate"]["seed"], 11);
  EXPECT_EQ(j["mcmc"]["thin"], 10);
  EXPECT_FALSE(j["simulate"].contains("noise_sd"));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(gloss_cli({}).code, kExitUsage);
  EXPECT_EQ(gloss_cli({"fit"}).code, kExitUsage);
  EXPECT_EQ(gloss_cli({"fit", "--config", "x.toml", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(gloss_cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(gloss_cli({"--help"}).code, 0);
  const auto r = gloss_cli({"fit", "--config", "/nonexistent/x.toml"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(contains(r.err, "cannot read config")) << r.err;
  EXPECT_EQ(gloss_cli({"compare"}).code, kExitUsage);
}

TEST(Cli, UnknownConfigKeyFailsTheCommand) {
  const auto dir = scratch("unknown");
  const auto cfg = write_config(dir, std::string(kSmall) + "verbose = true\n");
  const auto r = gloss_cli({"fit", "--config", cfg.string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(contains(r.err, "unknown key mcmc.verbose")) << r.err;
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Cli, RuntimeErrorsExitOne) {
  const auto dir = scratch("runtime");
  const auto cfg = write_config(dir, "[model]\nkind = \"logistic\"\ncsv = \"missing.csv\"\n");
  const auto r = gloss_cli({"fit", "--config", cfg.string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_TRUE(contains(r.err, "missing.csv")) << r.err;
}

TEST(Cli, FitWritesPerVariantOutputs) {
  const auto dir = scratch("fit");
  const auto cfg = write_config(dir, kSmall);
  const auto out = dir / "run";
  const auto r = gloss_cli({"fit", "--config", cfg.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto* slug : {"gva", "gva_h_posthoc", "glossva"}) {
    for (const auto* file : {"lambda.bin", "fit.json", "elbo_trace.csv", "draws.csv", "manifest.json"})
      EXPECT_TRUE(fs::exists(out / slug / file)) << slug << "/" << file;
  }
  EXPECT_FALSE(fs::exists(out / "csgva"));

  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["command"], "fit");
  EXPECT_EQ(m["seeds"]["fit"], 3);
  EXPECT_EQ(m["seeds"]["simulate"], 11);
  EXPECT_EQ(m["config"]["fit"]["iterations"], 300);
  EXPECT_TRUE(m["timings"]["variants"].contains("GLOSS-VA"));
  EXPECT_TRUE(m.contains("version"));

  const auto draws = read_draws(out / "glossva" / "draws.csv");
  EXPECT_EQ(draws.draws.rows(), 200u);
  EXPECT_EQ(draws.labels.front(), "beta0");
  EXPECT_EQ(draws.labels.size(), 5u + 4u);

  // the post-hoc view stores its base's lambda unchanged
  EXPECT_EQ(load_lambda(out / "gva_h_posthoc" / "lambda.bin").lambda,
            load_lambda(out / "gva" / "lambda.bin").lambda);
}

TEST(Cli, FitIsDeterministicAndSeedOverrides) {
  const auto dir = scratch("determinism");
  const auto cfg = write_config(dir, kSmall);
  auto go = [&](const std::string& name, std::vector<std::string> extra) {
    std::vector<std::string> args = {"fit", "--config", cfg.string(), "--out", (dir / name).string(),
                                     "--variants", "csgva,glossva"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = gloss_cli(args);
    EXPECT_EQ(r.code, 0) << r.err;
  };
  go("a", {});
  go("b", {});
  go("c", {"--seed", "4"});
  for (const auto* f : {"lambda.bin", "draws.csv", "elbo_trace.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / "glossva" / f), slurp(dir / "b" / "glossva" / f)) << f;
    EXPECT_NE(slurp(dir / "a" / "glossva" / f), slurp(dir / "c" / "glossva" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir / "a" / "gva"));
  const auto m = nlohmann::json::parse(slurp(dir / "c" / "manifest.json"));
  EXPECT_EQ(m["seeds"]["fit"], 4);
  EXPECT_EQ(m["config"]["fit"]["seed"], 4);
  EXPECT_EQ(load_lambda(dir / "c" / "glossva" / "lambda.bin").seed, 4u);
}

TEST(Cli, BadVariantFlag) {
  const auto dir = scratch("badvariant");
  const auto cfg = write_config(dir, kSmall);
  const auto r = gloss_cli({"fit", "--config", cfg.string(), "--variants", "gva,nope"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(contains(r.err, "--variants")) << r.err;
}

TEST(Cli, SampleReproducesFitDraws) {
  const auto dir = scratch("sample");
  const auto cfg = write_config(dir, kSmall);
  const auto run_dir = dir / "run";
  ASSERT_EQ(gloss_cli({"fit", "--config", cfg.string(), "--out", run_dir.string(), "--variants",
                       "gva,gva_h_posthoc"})
                .code,
            0);
  const auto lambda = (run_dir / "gva" / "lambda.bin").string();
  // same seed and count as fit used
  auto r = gloss_cli({"sample", "--config", cfg.string(), "--lambda", lambda, "--out",
                      (dir / "s1").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "s1" / "draws.csv"), slurp(run_dir / "gva" / "draws.csv"));
  EXPECT_TRUE(fs::exists(dir / "s1" / "manifest.json"));

  // a post-hoc view of the same lambda
  r = gloss_cli({"sample", "--config", cfg.string(), "--lambda", lambda, "--variant", "G-VA^{H-}",
                 "--out", (dir / "s2").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "s2" / "draws.csv"), slurp(run_dir / "gva_h_posthoc" / "draws.csv"));

  r = gloss_cli({"sample", "--config", cfg.string(), "--lambda", lambda, "--count", "7", "--seed",
                 "9", "--out", (dir / "s3").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_draws(dir / "s3" / "draws.csv").draws.rows(), 7u);

  // a learned-skew family is not a view of G-VA
  r = gloss_cli({"sample", "--config", cfg.string(), "--lambda", lambda, "--variant", "GLOSS-VA",
                 "--out", (dir / "s4").string()});
  EXPECT_EQ(r.code, kExitUsage);

  // a lambda fitted to another model is refused
  std::string other = kSmall;
  other.replace(other.find("groups = 4"), 10, "groups = 5");
  const auto cfg2 = dir / "other.toml";
  std::ofstream(cfg2) << other;
  r = gloss_cli({"sample", "--config", cfg2.string(), "--lambda", lambda, "--out", (dir / "s5").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_TRUE(contains(r.err, "layout")) << r.err;
}

TEST(Cli, McmcThenCompare) {
  const auto dir = scratch("pipeline");
  const auto cfg = write_config(dir, kSmall);
  const auto run_dir = dir / "run";
  ASSERT_EQ(gloss_cli({"fit", "--config", cfg.string(), "--out", run_dir.string()}).code, 0);
  auto r = gloss_cli({"mcmc", "--config", cfg.string(), "--out", run_dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto chain = read_draws(run_dir / "mcmc" / "draws.csv");
  EXPECT_EQ(chain.draws.rows(), 200u);
  const auto info = nlohmann::json::parse(slurp(run_dir / "mcmc" / "chain.json"));
  EXPECT_TRUE(info.contains("acceptance_rate"));
  EXPECT_TRUE(fs::exists(run_dir / "mcmc" / "manifest.json"));

  r = gloss_cli({"compare", "--config", cfg.string(), "--out", run_dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = load_report(run_dir / "report");
  // 3 variants x 9 coordinates
  EXPECT_EQ(rep.marginals.size(), 27u);
  EXPECT_EQ(rep.ks.size(), 27u);
  EXPECT_FALSE(rep.sigma.empty());
  // 300 iterations at stride 100: 0, 100, 200 and the final point, per variant
  EXPECT_EQ(rep.elbo_trace.size(), 3u * 4u);
  EXPECT_TRUE(fs::exists(run_dir / "report" / "manifest.json"));

  // mcmc seed override changes the chain
  r = gloss_cli({"mcmc", "--config", cfg.string(), "--out", (dir / "other").string(), "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir / "other" / "mcmc" / "draws.csv"), slurp(run_dir / "mcmc" / "draws.csv"));
}

TEST(Cli, CompareIdenticalFilesGivesZeroKs) {
  const auto dir = scratch("identical");
  const auto cfg = write_config(dir, kSmall);
  ASSERT_EQ(gloss_cli({"fit", "--config", cfg.string(), "--out", (dir / "run").string(),
                       "--variants", "gva"})
                .code,
            0);
  const auto draws = (dir / "run" / "gva" / "draws.csv").string();
  const auto r = gloss_cli({"compare", "--vi", draws, "--oracle", draws, "--variant", "G-VA",
                            "--out", (dir / "report").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = load_report(dir / "report");
  ASSERT_EQ(rep.ks.size(), 9u);
  for (const auto& k : rep.ks) {
    EXPECT_EQ(k.ks.statistic, 0.0);
    EXPECT_EQ(k.variant, "G-VA");
  }
  EXPECT_TRUE(rep.sigma.empty());  // no config, no model for Sigma

  EXPECT_EQ(gloss_cli({"compare", "--vi", draws, "--out", (dir / "x").string()}).code, kExitUsage);
  EXPECT_EQ(gloss_cli({"compare", "--vi", draws, "--oracle", (dir / "nope.csv").string(), "--out",
                       (dir / "x").string()})
                .code,
            kExitRuntime);
}
