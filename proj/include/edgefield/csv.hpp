#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace edgefield::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name, or -1.
  int column(std::string_view name) const;
};

// Comma-separated, first line is the header. Blank lines are skipped and a
// trailing '\r' is tolerated. Throws ValidationError on ragged rows.
Table parse(const std::string& text);
Table read(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

long long parse_int(std::string_view token);
double parse_double(std::string_view token);  // accepts "NA" as NaN

// Shortest representation that parses back to the same double.
std::string format_double(double x);

}  // namespace edgefield::csv
