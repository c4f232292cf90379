#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace verbatim {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

// Parses RFC 3339 ("2024-04-01T12:30:00Z", "2024-04-01T14:30:00.250+02:00").
// A bare date ("2024-04-01") is accepted as midnight UTC.
std::optional<Timestamp> parse_rfc3339(std::string_view s);

// UTC, second precision unless the value carries milliseconds.
std::string format_rfc3339(Timestamp t);

Timestamp now_utc();

}  // namespace verbatim
