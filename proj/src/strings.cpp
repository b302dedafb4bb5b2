// SPDX-License-Identifier: Apache-2.0

#include "starplus/strings.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::config,
                fmt::format("{}: expected a non-negative integer, got '{}'", what, text));
  }
  return v;
}

std::size_t parse_size(std::string_view text, std::string_view what) {
  return static_cast<std::size_t>(parse_u64(text, what));
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string s(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw Error(ErrorCode::config, fmt::format("{}: expected a number, got '{}'", what, text));
  }
  return v;
}

std::vector<double> parse_doubles(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (const std::string& part : split(text, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(parse_double(t, what));
  }
  return out;
}

}  // namespace starplus
