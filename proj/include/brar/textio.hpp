#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace brar::textio {

/// Shortest-trip-safe decimal: 17 significant digits, general format.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

/// Whitespace-separated fields.
std::vector<std::string_view> split(std::string_view line);

std::string_view trim(std::string_view s);

/// Splits "key = value" (either side trimmed). Returns nullopt for lines
/// that are blank or start with '#'; throws std::invalid_argument when the
/// line has no '='.
std::optional<std::pair<std::string, std::string>> parse_key_value(std::string_view line);

}  // namespace brar::textio
