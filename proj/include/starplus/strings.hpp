// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace starplus {

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

// Strict numeric parsing: the whole token must be consumed, otherwise an
// ErrorCode::config error naming `what` is thrown.
std::size_t parse_size(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
std::vector<double> parse_doubles(std::string_view text, std::string_view what);

}  // namespace starplus
