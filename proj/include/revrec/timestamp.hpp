#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace revrec {

/// UTC instant with one-second resolution. Fractional seconds in input are
/// truncated.
using Timestamp = std::chrono::sys_seconds;

/// Parses an RFC 3339 date-time ("2021-03-01T12:00:00Z",
/// "2021-03-01T12:00:00.250+02:00"). Returns nullopt on malformed input.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

/// Canonical form: "YYYY-MM-DDTHH:MM:SSZ".
std::string format_rfc3339(Timestamp ts);

inline double days_between(Timestamp from, Timestamp to) {
  return std::chrono::duration<double>(to - from).count() / 86400.0;
}

}  // namespace revrec
