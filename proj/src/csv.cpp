#include "gloss/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace gloss::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::string where(const Row& row, std::string_view name) {
  return "line " + std::to_string(row.line) + ", column '" + std::string(name) + "'";
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  throw CsvError("missing column '" + std::string(name) + "'");
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const auto field = line.substr(start, comma == std::string_view::npos
                                              ? std::string_view::npos
                                              : comma - start);
    out.emplace_back(trim(field));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path.string() + "'");
  Table table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw CsvError(path.string() + ": line " + std::to_string(line_no) + " has " +
                     std::to_string(fields.size()) + " fields, header has " +
                     std::to_string(table.header.size()));
    }
    table.rows.push_back(Row{line_no, std::move(fields)});
  }
  if (!have_header) throw CsvError(path.string() + ": missing header row");
  return table;
}

std::string format(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(const Row& row, std::size_t column, std::string_view name) {
  const std::string& field = row.fields.at(column);
  if (field == "nan") return std::nan("");
  if (field == "inf") return INFINITY;
  if (field == "-inf") return -INFINITY;
  double out = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw CsvError(where(row, name) + ": '" + field + "' is not a number");
  }
  return out;
}

long long parse_integer(const Row& row, std::size_t column, std::string_view name) {
  const double v = parse_double(row, column, name);
  if (!std::isfinite(v) || std::floor(v) != v) {
    throw CsvError(where(row, name) + ": '" + row.fields.at(column) +
                   "' is not an integer");
  }
  return static_cast<long long>(v);
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) out << ',';
    out << fields[k];
  }
  out << '\n';
}

}  // namespace gloss::csv
