#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace rnnsm::data {

/// Declared markers carried by every session. Discrete markers are category
/// indices in [0, cardinality); anything else numeric is a continuous marker.
struct MarkerSchema {
  struct Discrete {
    std::string name;
    int cardinality = 0;
    bool operator==(const Discrete&) const = default;
  };

  std::vector<Discrete> discrete;
  std::vector<std::string> continuous;

  /// device, day_of_week, day_of_month, hour_of_day; pages_viewed.
  static MarkerSchema defaults();

  bool operator==(const MarkerSchema&) const = default;
};

void to_json(nlohmann::json& j, const MarkerSchema& s);
void from_json(const nlohmann::json& j, MarkerSchema& s);

/// One website visit. Times are days since the dataset epoch.
struct Session {
  std::string user_id;
  double start_time = 0.0;
  double duration = 0.0;
  std::map<std::string, int> discrete_markers;
  std::map<std::string, double> continuous_markers;

  double end_time() const { return start_time + duration; }
};

/// Observation window [0, prediction_start], activity window
/// [activity_start, prediction_start], prediction window (prediction_start, horizon_end].
struct WindowConfig {
  double activity_start = 0.0;
  double prediction_start = 0.0;
  double horizon_end = 0.0;

  void validate() const;
  double prediction_length() const { return horizon_end - prediction_start; }
  bool operator==(const WindowConfig&) const = default;
};

void to_json(nlohmann::json& j, const WindowConfig& w);
void from_json(const nlohmann::json& j, WindowConfig& w);

struct UserHistory {
  std::string user_id;
  /// Observation-window sessions, strictly increasing in start_time.
  std::vector<Session> sessions;
  /// Gap from each session's end to the next session's start.
  std::vector<double> return_targets;
  /// Gap from the last observed session end to the first prediction-window
  /// session (returning) or to horizon_end (censored).
  double final_gap = 0.0;
  bool is_censored = false;
  /// End of the last observed session, clamped to prediction_start.
  double last_session_end = 0.0;

  int active_day_count() const;
};

struct Dataset {
  std::vector<UserHistory> users;
  WindowConfig window;
  MarkerSchema schema = MarkerSchema::defaults();
  /// Unix seconds of day 0.
  std::int64_t epoch_seconds = 0;

  std::vector<std::size_t> returning_indices() const;
  std::vector<std::size_t> nonreturning_indices() const;
  double censored_fraction() const;
};

/// Groups raw sessions into per-user histories, keeps users active in the
/// activity window and labels them returning or censored. Sessions starting
/// at or before the previous session's end are merged into it.
Dataset assign_windows(std::vector<Session> raw_sessions, const WindowConfig& config,
                       const MarkerSchema& schema = MarkerSchema::defaults());

/// d_{j+1} = start_{j+1} - end_j over consecutive sessions.
std::vector<double> compute_return_targets(const UserHistory& history);

/// Splits each stratum (returning / censored) independently so that both
/// parts carry the same censoring ratio up to rounding.
std::pair<Dataset, Dataset> stratified_split(const Dataset& dataset, double test_fraction,
                                             std::uint64_t seed);

/// Calendar markers of a session start: day_of_week (0 = Sunday),
/// day_of_month (0-based), hour_of_day.
struct CalendarMarkers {
  int day_of_week = 0;
  int day_of_month = 0;
  int hour_of_day = 0;
};
CalendarMarkers calendar_markers(std::int64_t epoch_seconds, double day_offset);

/// Fills day_of_week / day_of_month / hour_of_day when the schema declares
/// them and the session does not already carry them.
void fill_calendar_markers(Session& s, std::int64_t epoch_seconds, const MarkerSchema& schema);

}  // namespace rnnsm::data
