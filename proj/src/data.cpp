#include "rnnsm/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "rnnsm/errors.hpp"

namespace rnnsm::data {

namespace {

constexpr double kMergeTolerance = 1e-12;

std::string describe(const Session& s, std::size_t index) {
  std::ostringstream os;
  os << "session #" << index << " (user '" << s.user_id << "', start " << s.start_time << ")";
  return os.str();
}

void validate_session(const Session& s, std::size_t index, const MarkerSchema& schema,
                      const WindowConfig& window) {
  if (!std::isfinite(s.start_time) || s.start_time < 0.0) {
    throw ValidationError(describe(s, index) + ": start_time must be finite and >= 0");
  }
  if (!std::isfinite(s.duration) || s.duration < 0.0) {
    throw ValidationError(describe(s, index) + ": duration must be finite and >= 0");
  }
  if (s.start_time > window.horizon_end) {
    throw ValidationError(describe(s, index) + ": starts after horizon_end " +
                          std::to_string(window.horizon_end));
  }
  for (const auto& d : schema.discrete) {
    auto it = s.discrete_markers.find(d.name);
    if (it != s.discrete_markers.end() && (it->second < 0 || it->second >= d.cardinality)) {
      throw ValidationError(describe(s, index) + ": marker '" + d.name + "' = " +
                            std::to_string(it->second) + " outside [0, " +
                            std::to_string(d.cardinality) + ")");
    }
  }
}

// Merges a session into the previous one: the span is extended, continuous
// markers summed and the first session's discrete markers kept.
void merge_into(Session& target, const Session& extra) {
  target.duration = std::max(target.end_time(), extra.end_time()) - target.start_time;
  for (const auto& [name, value] : extra.continuous_markers) {
    target.continuous_markers[name] += value;
  }
  for (const auto& [name, value] : extra.discrete_markers) {
    target.discrete_markers.try_emplace(name, value);
  }
}

std::optional<UserHistory> build_history(std::vector<Session> sessions,
                                         const WindowConfig& window) {
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const Session& a, const Session& b) { return a.start_time < b.start_time; });

  std::vector<Session> merged;
  merged.reserve(sessions.size());
  for (auto& s : sessions) {
    if (!merged.empty() && s.start_time <= merged.back().end_time() + kMergeTolerance) {
      merge_into(merged.back(), s);
    } else {
      merged.push_back(std::move(s));
    }
  }

  UserHistory h;
  h.user_id = merged.front().user_id;
  std::optional<double> first_return;
  bool active = false;
  for (auto& s : merged) {
    if (s.start_time <= window.prediction_start) {
      if (s.start_time >= window.activity_start) active = true;
      h.sessions.push_back(std::move(s));
    } else if (!first_return) {
      first_return = s.start_time;
    }
  }
  if (!active) return std::nullopt;

  h.last_session_end = std::min(h.sessions.back().end_time(), window.prediction_start);
  h.return_targets = compute_return_targets(h);
  h.is_censored = !first_return.has_value();
  h.final_gap = (first_return ? *first_return : window.horizon_end) - h.last_session_end;
  return h;
}

}  // namespace

MarkerSchema MarkerSchema::defaults() {
  MarkerSchema s;
  s.discrete = {{"device", 4}, {"day_of_week", 7}, {"day_of_month", 31}, {"hour_of_day", 24}};
  s.continuous = {"pages_viewed"};
  return s;
}

void to_json(nlohmann::json& j, const MarkerSchema& s) {
  j = nlohmann::json::object();
  auto& d = j["discrete"] = nlohmann::json::array();
  for (const auto& m : s.discrete) d.push_back({{"name", m.name}, {"cardinality", m.cardinality}});
  j["continuous"] = s.continuous;
}

void from_json(const nlohmann::json& j, MarkerSchema& s) {
  s.discrete.clear();
  for (const auto& m : j.at("discrete")) {
    s.discrete.push_back({m.at("name").get<std::string>(), m.at("cardinality").get<int>()});
  }
  s.continuous = j.at("continuous").get<std::vector<std::string>>();
}

void WindowConfig::validate() const {
  if (!(0.0 < activity_start && activity_start < prediction_start &&
        prediction_start < horizon_end)) {
    throw ConfigError("window must satisfy 0 < activity_start < prediction_start < horizon_end");
  }
}

void to_json(nlohmann::json& j, const WindowConfig& w) {
  j = {{"activity_start", w.activity_start},
       {"prediction_start", w.prediction_start},
       {"horizon_end", w.horizon_end}};
}

void from_json(const nlohmann::json& j, WindowConfig& w) {
  w.activity_start = j.at("activity_start").get<double>();
  w.prediction_start = j.at("prediction_start").get<double>();
  w.horizon_end = j.at("horizon_end").get<double>();
}

int UserHistory::active_day_count() const {
  std::set<long> days;
  for (const auto& s : sessions) days.insert(static_cast<long>(std::floor(s.start_time)));
  return static_cast<int>(days.size());
}

std::vector<std::size_t> Dataset::returning_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < users.size(); ++i)
    if (!users[i].is_censored) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::nonreturning_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < users.size(); ++i)
    if (users[i].is_censored) out.push_back(i);
  return out;
}

double Dataset::censored_fraction() const {
  if (users.empty()) return 0.0;
  return static_cast<double>(nonreturning_indices().size()) / static_cast<double>(users.size());
}

Dataset assign_windows(std::vector<Session> raw_sessions, const WindowConfig& config,
                       const MarkerSchema& schema) {
  config.validate();
  Dataset ds;
  ds.window = config;
  ds.schema = schema;

  std::map<std::string, std::vector<Session>> by_user;
  for (std::size_t i = 0; i < raw_sessions.size(); ++i) {
    validate_session(raw_sessions[i], i, schema, config);
    by_user[raw_sessions[i].user_id].push_back(std::move(raw_sessions[i]));
  }
  for (auto& [id, sessions] : by_user) {
    if (auto h = build_history(std::move(sessions), config)) ds.users.push_back(std::move(*h));
  }
  return ds;
}

std::vector<double> compute_return_targets(const UserHistory& history) {
  const auto& s = history.sessions;
  if (s.empty()) throw ValidationError("user '" + history.user_id + "' has no sessions");
  std::vector<double> targets;
  targets.reserve(s.size() - 1);
  for (std::size_t j = 0; j + 1 < s.size(); ++j) {
    double gap = s[j + 1].start_time - s[j].end_time();
    if (!(s[j + 1].start_time > s[j].start_time) || !(gap > 0.0)) {
      throw ValidationError("user '" + history.user_id + "': sessions " + std::to_string(j) +
                            " and " + std::to_string(j + 1) + " are not strictly increasing");
    }
    targets.push_back(gap);
  }
  return targets;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& dataset, double test_fraction,
                                             std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  auto ret = dataset.returning_indices();
  auto non = dataset.nonreturning_indices();
  if (ret.size() < 2 || non.size() < 2) {
    throw ValidationError("stratified_split needs at least 2 users in each stratum");
  }

  std::mt19937_64 rng(seed);
  std::vector<bool> in_test(dataset.users.size(), false);
  for (auto* stratum : {&ret, &non}) {
    std::shuffle(stratum->begin(), stratum->end(), rng);
    auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(stratum->size())));
    n_test = std::clamp<std::size_t>(n_test, 1, stratum->size() - 1);
    for (std::size_t k = 0; k < n_test; ++k) in_test[(*stratum)[k]] = true;
  }

  Dataset train, test;
  for (auto* part : {&train, &test}) {
    part->window = dataset.window;
    part->schema = dataset.schema;
    part->epoch_seconds = dataset.epoch_seconds;
  }
  for (std::size_t i = 0; i < dataset.users.size(); ++i) {
    (in_test[i] ? test : train).users.push_back(dataset.users[i]);
  }
  return {std::move(train), std::move(test)};
}

CalendarMarkers calendar_markers(std::int64_t epoch_seconds, double day_offset) {
  using namespace std::chrono;
  const auto t = static_cast<std::int64_t>(std::floor(static_cast<double>(epoch_seconds) +
                                                      day_offset * 86400.0));
  const sys_seconds tp{seconds{t}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const weekday wd{day};
  CalendarMarkers m;
  m.day_of_week = static_cast<int>(wd.c_encoding());
  m.day_of_month = static_cast<int>(static_cast<unsigned>(ymd.day())) - 1;
  m.hour_of_day = static_cast<int>(duration_cast<hours>(tp - day).count());
  return m;
}

void fill_calendar_markers(Session& s, std::int64_t epoch_seconds, const MarkerSchema& schema) {
  const auto cal = calendar_markers(epoch_seconds, s.start_time);
  for (const auto& d : schema.discrete) {
    if (d.name == "day_of_week") s.discrete_markers.try_emplace(d.name, cal.day_of_week);
    if (d.name == "day_of_month") s.discrete_markers.try_emplace(d.name, cal.day_of_month);
    if (d.name == "hour_of_day") s.discrete_markers.try_emplace(d.name, cal.hour_of_day);
  }
}

}  // namespace rnnsm::data
