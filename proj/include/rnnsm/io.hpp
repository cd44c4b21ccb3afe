#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "rnnsm/data.hpp"

namespace rnnsm::io {

/// Parses "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM]" into Unix seconds.
double parse_iso8601(std::string_view text);

/// UTC "YYYY-MM-DDTHH:MM:SSZ" (fractional seconds rounded).
std::string format_iso8601(double unix_seconds);
std::string format_iso_date(double unix_seconds);

/// Midnight UTC of the day containing unix_seconds.
std::int64_t floor_to_day(double unix_seconds);

struct SessionLog {
  std::vector<data::Session> sessions;
  std::int64_t epoch_seconds = 0;
};

/// One JSON object per line: user_id, start_ts, duration_s, markers.
/// The epoch is midnight UTC of the earliest start_ts; times become days.
SessionLog read_sessions_jsonl(std::istream& in, const data::MarkerSchema& schema);
SessionLog read_sessions_jsonl(const std::string& path, const data::MarkerSchema& schema);

void write_sessions_jsonl(std::ostream& out, const std::vector<data::Session>& sessions,
                          std::int64_t epoch_seconds);

/// Interprets a window bound given either as days since epoch (number) or as
/// an ISO-8601 date/time string.
double resolve_day(const nlohmann::json& value, std::int64_t epoch_seconds);
data::WindowConfig resolve_window(const nlohmann::json& window, std::int64_t epoch_seconds);

}  // namespace rnnsm::io
