#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnnsm/data.hpp"

namespace rnnsm::synth {

/// One user population with log-normal inter-session gaps (log-days).
/// Gaps that start after a user's change-point are multiplied by
/// lapse_multiplier, reached geometrically over lapse_ramp_days.
struct Cohort {
  std::string name;
  double fraction = 0.0;
  double mu = 0.0;
  double sigma = 1.0;
  double lapse_multiplier = 1.0;
  /// Change-point day, uniform on [change_point_min, change_point_max].
  double change_point_min = 0.0;
  double change_point_max = 0.0;
  double lapse_ramp_days = 0.0;
};

struct GeneratorConfig {
  int user_count = 2000;
  double horizon_days = 540.0;
  data::WindowConfig window{360.0, 420.0, 540.0};
  /// First sessions are uniform on [join_start, join_end].
  double join_start = 0.0;
  double join_end = 400.0;
  /// Per-user offset added to the cohort mu, N(0, user_mu_sd).
  double user_mu_sd = 0.3;
  std::vector<Cohort> cohorts;
  /// Device categorical probabilities (one per device index).
  std::vector<double> device_probabilities = {0.55, 0.3, 0.12, 0.03};
  /// Hour-of-day mixture: night mode (mean, sd) with this weight, else day mode.
  double night_weight = 0.3;
  double night_hour_mean = 22.0;
  double day_hour_mean = 13.0;
  double hour_sd = 2.5;
  /// Move each session start onto an hour drawn from the mixture (same or
  /// next day). Off: starts follow the renewal gaps exactly.
  bool snap_to_hours = true;
  double duration_mu = std::log(8.0 / 1440.0);
  double duration_sigma = 0.8;
  double pages_mu = std::log(5.0);
  double pages_sigma = 0.7;
  std::uint64_t seed = 42;
  /// Day 0 as an ISO date.
  std::string epoch_date = "2021-01-01";

  /// heavy / regular / lapsing mix.
  static GeneratorConfig defaults();
  void validate() const;
};

void to_json(nlohmann::json& j, const Cohort& c);
void from_json(const nlohmann::json& j, Cohort& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

struct GroundTruth {
  std::string user_id;
  std::string cohort;
  /// First session start after prediction_start minus the last session end
  /// at or before it; may lie beyond the horizon. Negative if the user has no
  /// session before prediction_start.
  double true_return_days = 0.0;
  bool observed_before_prediction = false;
  bool returns_within_horizon = false;
};

struct Generated {
  std::vector<data::Session> sessions;
  std::vector<GroundTruth> truth;
  std::int64_t epoch_seconds = 0;
  data::MarkerSchema schema;
  data::WindowConfig window;
};

/// exp(mu + sigma * z), z ~ N(0, 1).
double sample_gap(std::mt19937_64& rng, double mu, double sigma);

/// Stateless per-user seed derivation.
std::uint64_t user_seed(std::uint64_t seed, std::uint64_t user_index);

Generated generate(const GeneratorConfig& config);

/// user_id,cohort,true_return_days_or_censored ("censored" past the horizon).
void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruth>& truth);

}  // namespace rnnsm::synth
