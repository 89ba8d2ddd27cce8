#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace policylab {

/// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::int64_t;

inline constexpr TimestampMs kMillisPerDay = 86'400'000;

/// Parses an RFC 3339 date-time (`2024-03-01T12:00:00Z`, optional fraction,
/// `Z` or `+hh:mm` offset). Returns nullopt on any syntax or range error.
std::optional<TimestampMs> parse_rfc3339(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SS[.mmm]Z`.
std::string format_rfc3339(TimestampMs ts);

}  // namespace policylab
