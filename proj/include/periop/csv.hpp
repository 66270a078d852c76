#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace periop::csv {

// Splits one line on commas. Fields may be wrapped in double quotes, with ""
// as an escaped quote; a trailing '\r' is dropped.
std::vector<std::string> split_line(std::string_view line);

// Quotes a field only if it contains a comma, quote or newline.
std::string escape(std::string_view field);

// Shortest representation that parses back to the same double.
std::string format_double(double v);
// Fixed-point with `digits` decimals, for human-facing tables.
std::string format_fixed(double v, int digits);

std::optional<double> parse_double(std::string_view s);

void write_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace periop::csv
