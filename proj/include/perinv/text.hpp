#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace perinv {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
// Fixed decimals, for human-facing tables.
std::string format_fixed(double v, int decimals);

// Strict parses; return false on trailing garbage or range errors.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, long long& out);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
// Splits on runs of blanks (spaces and tabs).
std::vector<std::string> split_ws(std::string_view s);

}  // namespace perinv
