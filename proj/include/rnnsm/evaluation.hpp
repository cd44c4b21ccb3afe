#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnnsm/data.hpp"

namespace rnnsm::eval {

/// One model's prediction for one user. All durations are days measured
/// from the end of the user's last observed session.
struct PredictionRecord {
  std::string user_id;
  double predicted_return_days = 0.0;
  /// Present iff the user returned within the prediction window.
  std::optional<double> true_return_days;
  /// Present iff censored: the gap from last session end to horizon_end.
  std::optional<double> censored_lower_bound_days;
  /// horizon_end - last_session_end, for every user.
  double horizon_gap_days = 0.0;
  double last_session_end = 0.0;
  int active_day_count = 0;
  /// Model probability of not returning before horizon_end, when available.
  std::optional<double> nonreturn_probability;

  bool is_censored() const { return censored_lower_bound_days.has_value(); }
  /// floor(true_return_days / 7) for returning users.
  std::optional<int> true_return_week() const;
  /// Observed time for concordance: true return or censoring bound.
  double observed_days() const;
};

PredictionRecord make_record(const data::UserHistory& user, const data::WindowConfig& window,
                             double predicted_return_days);

/// RMSE over returning users only. Throws ValidationError if there are none.
double rmse_returning(std::span<const PredictionRecord> records);

/// Harrell's C with censoring: pairs (a, b) with a returning and
/// observed_a < observed_b; prediction ties count 1/2.
double concordance_index(std::span<const PredictionRecord> records);

enum class AucScore {
  /// predicted_return_days - horizon_gap_days (default).
  ShiftedPrediction,
  RawPrediction,
  NonReturnProbability,
};

/// AUC for the non-returning (censored) class via the rank statistic with
/// average ranks for ties.
double nonreturning_auc(std::span<const PredictionRecord> records,
                        AucScore score = AucScore::ShiftedPrediction);

/// A user is predicted non-returning iff predicted_return_days > horizon_gap_days.
double nonreturning_recall(std::span<const PredictionRecord> records);

struct BucketRow {
  int bucket = 0;
  std::size_t count = 0;
  double rmse = 0.0;
  double mean_error = 0.0;
  double squared_error_sum = 0.0;
};

inline constexpr int kActiveDayCap = 64;

struct ErrorBreakdowns {
  /// Returning users grouped by floor(true return / 7 days).
  std::vector<BucketRow> by_week;
  /// Returning users grouped by active-day count; bucket 64 holds 64 or more.
  std::vector<BucketRow> by_active_days;
};

ErrorBreakdowns error_breakdowns(std::span<const PredictionRecord> records);

/// RMSE over returning users whose active-day count lies in [lo, hi].
double rmse_for_active_days(std::span<const PredictionRecord> records, int lo, int hi);

struct ModelMetrics {
  double rmse_days = 0.0;
  double concordance = 0.0;
  double nonreturning_auc = 0.0;
  double nonreturning_recall = 0.0;
  /// Alternative AUC scores (raw prediction, non-return probability if present).
  double nonreturning_auc_raw = 0.0;
  std::optional<double> nonreturning_auc_probability;
  std::size_t users = 0;
  std::size_t returning = 0;
  ErrorBreakdowns breakdowns;
};

ModelMetrics evaluate_model(std::span<const PredictionRecord> records);

struct EvaluationReport {
  std::map<std::string, ModelMetrics> models;

  nlohmann::json to_json() const;
  /// model,week,count,rmse,mean_error
  void write_week_csv(std::ostream& out) const;
  /// model,active_days,count,rmse
  void write_active_days_csv(std::ostream& out) const;
  /// Plain-text summary table, one row per model.
  std::string table() const;
};

EvaluationReport evaluate(const std::map<std::string, std::vector<PredictionRecord>>& predictions);

/// Prediction CSV. The first five columns are user_id,
/// predicted_return_days, predicted_return_date, is_censored_truth,
/// true_return_days (empty if censored); horizon_gap_days,
/// last_session_end, active_day_count, nonreturn_probability follow.
void write_predictions_csv(std::ostream& out, std::span<const PredictionRecord> records,
                           std::int64_t epoch_seconds);
std::vector<PredictionRecord> read_predictions_csv(std::istream& in);

}  // namespace rnnsm::eval
