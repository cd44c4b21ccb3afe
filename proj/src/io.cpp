#include "rnnsm/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "rnnsm/errors.hpp"

namespace rnnsm::io {

namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
  int value = 0;
  if (pos + len > text.size()) throw ValidationError("truncated timestamp '" + std::string(whole) + "'");
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
  if (ec != std::errc{} || ptr != text.data() + pos + len) {
    throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

double parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  const int y = parse_int(text, 0, 4, text);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
    throw ValidationError("malformed timestamp '" + std::string(text) + "'");
  }
  const int mo = parse_int(text, 5, 2, text);
  const int d = parse_int(text, 8, 2, text);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date '" + std::string(text) + "'");
  double secs = static_cast<double>(sys_days{ymd}.time_since_epoch() / seconds{1});
  if (text.size() == 10) return secs;

  if (text[10] != 'T' && text[10] != ' ') {
    throw ValidationError("malformed timestamp '" + std::string(text) + "'");
  }
  const int hh = parse_int(text, 11, 2, text);
  const int mm = parse_int(text, 14, 2, text);
  const int ss = parse_int(text, 17, 2, text);
  if (hh > 23 || mm > 59 || ss > 60) throw ValidationError("invalid time in '" + std::string(text) + "'");
  secs += hh * 3600.0 + mm * 60.0 + ss;

  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    std::size_t start = ++pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    double frac = 0.0, scale = 0.1;
    for (std::size_t k = start; k < pos; ++k, scale *= 0.1) frac += (text[k] - '0') * scale;
    secs += frac;
  }
  if (pos == text.size() || text.substr(pos) == "Z") return secs;
  if ((text[pos] == '+' || text[pos] == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
    const int oh = parse_int(text, pos + 1, 2, text);
    const int om = parse_int(text, pos + 4, 2, text);
    const double offset = oh * 3600.0 + om * 60.0;
    return text[pos] == '+' ? secs - offset : secs + offset;
  }
  throw ValidationError("malformed timezone in '" + std::string(text) + "'");
}

std::int64_t floor_to_day(double unix_seconds) {
  return static_cast<std::int64_t>(std::floor(unix_seconds / 86400.0)) * 86400;
}

std::string format_iso8601(double unix_seconds) {
  using namespace std::chrono;
  const auto t = static_cast<std::int64_t>(std::llround(unix_seconds));
  const sys_seconds tp{seconds{t}};
  const auto dp = floor<days>(tp);
  const year_month_day ymd{dp};
  const hh_mm_ss hms{tp - dp};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

std::string format_iso_date(double unix_seconds) { return format_iso8601(unix_seconds).substr(0, 10); }

SessionLog read_sessions_jsonl(std::istream& in, const data::MarkerSchema& schema) {
  struct Raw {
    data::Session session;
    double start_unix;
  };
  std::vector<Raw> raws;
  std::string line;
  std::size_t line_no = 0;
  double earliest = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Raw r;
      r.session.user_id = j.at("user_id").get<std::string>();
      r.start_unix = parse_iso8601(j.at("start_ts").get<std::string>());
      r.session.duration = j.value("duration_s", 0.0) / 86400.0;
      if (j.contains("markers")) {
        for (const auto& [name, value] : j.at("markers").items()) {
          const bool discrete = std::any_of(schema.discrete.begin(), schema.discrete.end(),
                                            [&](const auto& d) { return d.name == name; });
          if (discrete) {
            r.session.discrete_markers[name] = value.get<int>();
          } else if (value.is_number()) {
            r.session.continuous_markers[name] = value.get<double>();
          }
        }
      }
      earliest = std::min(earliest, r.start_unix);
      raws.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  SessionLog log;
  if (raws.empty()) return log;
  log.epoch_seconds = floor_to_day(earliest);
  log.sessions.reserve(raws.size());
  for (auto& r : raws) {
    r.session.start_time = (r.start_unix - static_cast<double>(log.epoch_seconds)) / 86400.0;
    data::fill_calendar_markers(r.session, log.epoch_seconds, schema);
    log.sessions.push_back(std::move(r.session));
  }
  return log;
}

SessionLog read_sessions_jsonl(const std::string& path, const data::MarkerSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open session file '" + path + "'");
  return read_sessions_jsonl(in, schema);
}

void write_sessions_jsonl(std::ostream& out, const std::vector<data::Session>& sessions,
                          std::int64_t epoch_seconds) {
  for (const auto& s : sessions) {
    nlohmann::json j;
    j["user_id"] = s.user_id;
    j["start_ts"] = format_iso8601(static_cast<double>(epoch_seconds) + s.start_time * 86400.0);
    j["duration_s"] = std::round(s.duration * 86400.0);
    auto& m = j["markers"] = nlohmann::json::object();
    for (const auto& [k, v] : s.discrete_markers) m[k] = v;
    for (const auto& [k, v] : s.continuous_markers) m[k] = v;
    out << j.dump() << '\n';
  }
}

double resolve_day(const nlohmann::json& value, std::int64_t epoch_seconds) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) {
    return (parse_iso8601(value.get<std::string>()) - static_cast<double>(epoch_seconds)) / 86400.0;
  }
  throw ConfigError("window bound must be a number of days or an ISO-8601 string");
}

data::WindowConfig resolve_window(const nlohmann::json& window, std::int64_t epoch_seconds) {
  data::WindowConfig w;
  try {
    w.activity_start = resolve_day(window.at("activity_start"), epoch_seconds);
    w.prediction_start = resolve_day(window.at("prediction_start"), epoch_seconds);
    w.horizon_end = resolve_day(window.at("horizon_end"), epoch_seconds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("window: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("window: ") + e.what());
  }
  w.validate();
  return w;
}

}  // namespace rnnsm::io
