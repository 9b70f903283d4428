#pragma once

// Minimal comma-separated reader/writer for the project's tabular files.

#include <charconv>
#include <istream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "trajsim/road_network.hpp"

namespace trajsim::csv {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    std::string_view field = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("malformed number '" + std::string(s) + "'", line);
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, std::size_t line) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("malformed integer '" + std::string(s) + "'", line);
  }
  return v;
}

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Calls `fn(fields, line_number)` per data row after checking the header.
/// Rows with the wrong field count are reported with their line number.
template <typename Fn>
void for_each_row(std::istream& in, const std::vector<std::string>& header, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split(line);
    if (!seen_header) {
      if (fields.size() != header.size()) throw InputError("unexpected header", lineno);
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (fields[i] != header[i]) {
          throw InputError("expected column '" + header[i] + "', found '" +
                               std::string(fields[i]) + "'",
                           lineno);
        }
      }
      seen_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      throw InputError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    }
    fn(fields, lineno);
  }
  if (!seen_header) throw InputError("missing header row");
}

}  // namespace trajsim::csv
