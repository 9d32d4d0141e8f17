#include "rtqc/csv.hpp"

#include <charconv>
#include <fstream>

#include "rtqc/error.hpp"

namespace rtqc::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view field) {
  field = trim(field);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw IoError("not a number: '" + std::string(field) + "'");
  }
  return v;
}

long long parse_int(std::string_view field) {
  field = trim(field);
  long long v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw IoError("not an integer: '" + std::string(field) + "'");
  }
  return v;
}

bool parse_bool(std::string_view field) {
  field = trim(field);
  if (field == "1" || field == "true") {
    return true;
  }
  if (field == "0" || field == "false") {
    return false;
  }
  throw IoError("not a boolean: '" + std::string(field) + "'");
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = line.find(',');
    out.emplace_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) {
      break;
    }
    line.remove_prefix(comma + 1);
  }
  return out;
}

std::string join_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find_first_of(",\n\"") != std::string::npos) {
      throw InvalidArgumentError("csv field needs quoting, which is unsupported: " + fields[i]);
    }
    if (i > 0) {
      out += ',';
    }
    out += fields[i];
  }
  return out;
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) {
      return i;
    }
  }
  throw IoError("csv: missing column '" + std::string(name) + "'");
}

Table read_file(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  Table t;
  std::string line;
  bool header_done = !has_header;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') {
      continue;
    }
    auto fields = split_line(body);
    if (!header_done) {
      t.header = std::move(fields);
      header_done = true;
      continue;
    }
    if (has_header && fields.size() != t.header.size()) {
      throw IoError(path.string() + ": row has " + std::to_string(fields.size()) + " fields, header has " +
                    std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

}  // namespace rtqc::csv
