#pragma once

// Locale-independent number formatting and parsing shared by the text formats.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fab::text {

// Fixed-point with `decimals` digits; "-0.000" is normalized to "0.000".
std::string format_fixed(double value, int decimals);

// Shortest representation that parses back to the same double.
std::string format_shortest(double value);

// Parses the whole of `s` as a finite double. Leading '+' is accepted.
std::optional<double> parse_double(std::string_view s);

std::optional<long> parse_long(std::string_view s);

std::string_view trim(std::string_view s);

// Splits on runs of spaces/tabs.
std::vector<std::string_view> split_ws(std::string_view s);

}  // namespace fab::text
