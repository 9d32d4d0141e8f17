#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rtqc::csv {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view field);
long long parse_int(std::string_view field);
bool parse_bool(std::string_view field);

/// Plain comma separation with surrounding whitespace trimmed; quoting is not supported.
std::vector<std::string> split_line(std::string_view line);
/// Rejects fields that would need quoting.
std::string join_line(const std::vector<std::string>& fields);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws IoError if absent.
  std::size_t column(std::string_view name) const;
};

/// Skips blank lines and lines starting with '#'. When has_header is false, header stays empty.
Table read_file(const std::filesystem::path& path, bool has_header = true);

}  // namespace rtqc::csv
