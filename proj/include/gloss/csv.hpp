#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gloss::csv {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Row {
  std::size_t line = 0;  // 1-based line number in the file
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  /// Column position by name; throws CsvError naming the column if absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a comma-separated file with a mandatory header row. Blank lines are
/// skipped; every data row must have as many fields as the header.
Table read(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line);

/// Shortest representation that parses back to the same double.
std::string format(double x);

double parse_double(const Row& row, std::size_t column, std::string_view name);
long long parse_integer(const Row& row, std::size_t column, std::string_view name);

/// Writes fields joined by commas and a newline.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace gloss::csv
