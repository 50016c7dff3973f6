#include "gloss/diagnostics.hpp"

#include <cmath>
#include <fstream>

#include "gloss/csv.hpp"

namespace gloss {

void write_draws(const std::filesystem::path& path, const DrawTable& table) {
  if (table.labels.size() != table.draws.cols()) {
    throw DimensionError("write_draws: one label per column required");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  csv::write_row(out, table.labels);
  std::vector<std::string> fields(table.labels.size());
  for (std::size_t r = 0; r < table.draws.rows(); ++r) {
    for (std::size_t k = 0; k < fields.size(); ++k) fields[k] = csv::format(table.draws(r, k));
    csv::write_row(out, fields);
  }
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

DrawTable read_draws(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  DrawTable table;
  table.labels = t.header;
  table.draws = Matrix<double>(t.rows.size(), t.header.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t k = 0; k < t.header.size(); ++k)
      table.draws(r, k) = csv::parse_double(t.rows[r], k, t.header[k]);
  return table;
}

void ComparisonReport::append(const ComparisonReport& other) {
  marginals.insert(marginals.end(), other.marginals.begin(), other.marginals.end());
  sigma.insert(sigma.end(), other.sigma.begin(), other.sigma.end());
  ks.insert(ks.end(), other.ks.begin(), other.ks.end());
  elbo_trace.insert(elbo_trace.end(), other.elbo_trace.begin(), other.elbo_trace.end());
}

namespace {

struct Entry {
  std::string name;
  std::string kind;
  std::size_t row;
  std::size_t col;
};

// Per-draw derived quantities: one column per entry.
std::vector<std::vector<double>> derive_sigma(const DrawTable& t, const SigmaMap& sigma,
                                              std::size_t global_dim,
                                              std::vector<Entry>& entries) {
  std::vector<std::vector<double>> values;
  for (std::size_t r = 0; r < t.draws.rows(); ++r) {
    const auto row = t.draws.data().subspan(r * t.draws.cols(), global_dim);
    const auto s = sigma(row);
    if (!s) return {};
    const std::size_t p = s->rows();
    if (entries.empty()) {
      for (std::size_t i = 0; i < p; ++i)
        entries.push_back({"Sigma_" + std::to_string(i) + "_" + std::to_string(i),
                           "variance", i, i});
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = j + 1; i < p; ++i)
          entries.push_back({"Sigma_" + std::to_string(i) + "_" + std::to_string(j),
                             "covariance", i, j});
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = j + 1; i < p; ++i)
          entries.push_back({"Corr_" + std::to_string(j) + "_" + std::to_string(i),
                             "correlation", j, i});
      values.assign(entries.size(), {});
    }
    std::size_t e = 0;
    for (std::size_t i = 0; i < p; ++i) values[e++].push_back((*s)(i, i));
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = j + 1; i < p; ++i) values[e++].push_back((*s)(i, j));
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = j + 1; i < p; ++i)
        values[e++].push_back((*s)(i, j) / std::sqrt((*s)(i, i) * (*s)(j, j)));
  }
  return values;
}

}  // namespace

ComparisonReport compare(const std::string& variant, const DrawTable& vi,
                         const DrawTable& oracle, const SigmaMap& sigma,
                         std::size_t global_dim) {
  if (vi.labels != oracle.labels) {
    throw LabelMismatch("compare: VI and oracle draws have different coordinate labels");
  }
  ComparisonReport report;
  for (std::size_t k = 0; k < vi.labels.size(); ++k) {
    const auto a = column(vi.draws, k);
    const auto b = column(oracle.draws, k);
    report.marginals.push_back({variant, vi.labels[k], moments(a), moments(b)});
    report.ks.push_back({variant, vi.labels[k], ks_two_sample(a, b)});
  }
  if (sigma && global_dim > 0) {
    if (global_dim > vi.labels.size()) throw DimensionError("compare: global_dim too large");
    std::vector<Entry> entries_vi;
    std::vector<Entry> entries_or;
    const auto dv = derive_sigma(vi, sigma, global_dim, entries_vi);
    const auto dor = derive_sigma(oracle, sigma, global_dim, entries_or);
    for (std::size_t e = 0; e < entries_vi.size() && e < entries_or.size(); ++e) {
      const Moments mv = moments(dv[e]);
      const Moments mo = moments(dor[e]);
      report.sigma.push_back({variant, entries_vi[e].name, entries_vi[e].kind,
                              entries_vi[e].row, entries_vi[e].col, mv.mean, mv.sd, mo.mean,
                              mo.sd});
    }
  }
  return report;
}

SigmaMap sigma_map(const HierarchicalModel& model) {
  return [&model](std::span<const double> theta_g) {
    return model.random_effect_covariance(theta_g);
  };
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

using csv::format;

}  // namespace

void export_report(const ComparisonReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());

  auto m = open_for_write(dir / "marginals.csv");
  csv::write_row(m, {"variant", "coordinate", "vi_mean", "vi_sd", "vi_skewness", "oracle_mean",
                     "oracle_sd", "oracle_skewness"});
  for (const auto& r : report.marginals) {
    csv::write_row(m, {r.variant, r.coordinate, format(r.vi.mean), format(r.vi.sd),
                       format(r.vi.skewness), format(r.oracle.mean), format(r.oracle.sd),
                       format(r.oracle.skewness)});
  }

  auto s = open_for_write(dir / "derived_sigma.csv");
  csv::write_row(s, {"variant", "entry", "kind", "row", "col", "vi_mean", "vi_sd",
                     "oracle_mean", "oracle_sd"});
  for (const auto& r : report.sigma) {
    csv::write_row(s, {r.variant, r.entry, r.kind, std::to_string(r.row), std::to_string(r.col),
                       format(r.vi_mean), format(r.vi_sd), format(r.oracle_mean),
                       format(r.oracle_sd)});
  }

  auto k = open_for_write(dir / "ks.csv");
  csv::write_row(k, {"variant", "coordinate", "ks_statistic", "p_value"});
  for (const auto& r : report.ks) {
    csv::write_row(k, {r.variant, r.coordinate, format(r.ks.statistic), format(r.ks.p_value)});
  }

  auto e = open_for_write(dir / "elbo_trace.csv");
  csv::write_row(e, {"variant", "iteration", "elbo", "elbo_se"});
  for (const auto& r : report.elbo_trace) {
    csv::write_row(e, {r.variant, std::to_string(r.iteration), format(r.elbo), format(r.se)});
  }
  if (!m || !s || !k || !e) throw std::runtime_error("failed writing report to " + dir.string());
}

namespace {

csv::Table read_expect(const std::filesystem::path& path, const std::vector<std::string>& header) {
  csv::Table t = csv::read(path);
  if (t.header != header) throw csv::CsvError(path.string() + ": unexpected header");
  return t;
}

Moments read_moments(const csv::Row& row, std::size_t first) {
  Moments m;
  m.mean = csv::parse_double(row, first, "mean");
  m.sd = csv::parse_double(row, first + 1, "sd");
  m.skewness = csv::parse_double(row, first + 2, "skewness");
  m.degenerate = !(m.sd > 0.0);
  return m;
}

}  // namespace

ComparisonReport load_report(const std::filesystem::path& dir) {
  ComparisonReport report;
  for (const auto& row : read_expect(dir / "marginals.csv",
                                     {"variant", "coordinate", "vi_mean", "vi_sd", "vi_skewness",
                                      "oracle_mean", "oracle_sd", "oracle_skewness"})
                             .rows) {
    report.marginals.push_back(
        {row.fields[0], row.fields[1], read_moments(row, 2), read_moments(row, 5)});
  }
  for (const auto& row : read_expect(dir / "derived_sigma.csv",
                                     {"variant", "entry", "kind", "row", "col", "vi_mean", "vi_sd",
                                      "oracle_mean", "oracle_sd"})
                             .rows) {
    SigmaRow r;
    r.variant = row.fields[0];
    r.entry = row.fields[1];
    r.kind = row.fields[2];
    r.row = static_cast<std::size_t>(csv::parse_integer(row, 3, "row"));
    r.col = static_cast<std::size_t>(csv::parse_integer(row, 4, "col"));
    r.vi_mean = csv::parse_double(row, 5, "vi_mean");
    r.vi_sd = csv::parse_double(row, 6, "vi_sd");
    r.oracle_mean = csv::parse_double(row, 7, "oracle_mean");
    r.oracle_sd = csv::parse_double(row, 8, "oracle_sd");
    report.sigma.push_back(r);
  }
  for (const auto& row :
       read_expect(dir / "ks.csv", {"variant", "coordinate", "ks_statistic", "p_value"}).rows) {
    report.ks.push_back({row.fields[0], row.fields[1],
                         KsResult{csv::parse_double(row, 2, "ks_statistic"),
                                  csv::parse_double(row, 3, "p_value")}});
  }
  for (const auto& row :
       read_expect(dir / "elbo_trace.csv", {"variant", "iteration", "elbo", "elbo_se"}).rows) {
    report.elbo_trace.push_back(
        {row.fields[0], static_cast<std::size_t>(csv::parse_integer(row, 1, "iteration")),
         csv::parse_double(row, 2, "elbo"), csv::parse_double(row, 3, "elbo_se")});
  }
  return report;
}

}  // namespace gloss
