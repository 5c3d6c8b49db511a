#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace loopy {

// Parses "90s", "15m", "1h", "1d", "1w" or a bare number of seconds.
std::int64_t parse_duration(std::string_view text);

// Shortest exact rendering in the units above ("1h", "1d", "5400s").
std::string format_duration(std::int64_t seconds);

// Parses an ISO-8601 UTC date ("2025-01-01") or datetime ("2025-01-01T06:00:00Z"),
// or a bare integer of UTC seconds.
std::int64_t parse_timestamp(std::string_view text);

std::string format_timestamp(std::int64_t seconds);

}  // namespace loopy
