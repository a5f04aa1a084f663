#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lingscrub {

std::vector<std::string> split(std::string_view line, char sep);
std::string strip_cr(std::string s);
bool is_int(std::string_view s);
long long parse_int(std::string_view s, const std::string& what);
double parse_double(std::string_view s, const std::string& what);

/// Shortest round-trip decimal form; "NA" for NaN.
std::string format_real(double v);

}  // namespace lingscrub
