#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rnnsm/data.hpp"

namespace rnnsm::features {

/// Per-column z-score statistics, frozen on the training split.
/// Columns with zero spread are centred but not scaled.
struct NormStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> sd;

  static NormStats fit(const std::vector<std::string>& names,
                       const std::vector<std::vector<double>>& rows);
  double apply(std::size_t column, double value) const;
  void apply_in_place(std::vector<double>& row) const;
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

/// Aggregate covariates for the Cox models, one row per user.
struct AggregateFeatures {
  std::vector<std::string> names;
  std::vector<std::string> user_ids;
  std::vector<std::vector<double>> rows;

  Eigen::MatrixXd matrix() const;
};

/// session_count, active_day_count, mean/std inter-session gap, mean session
/// duration, mean of each continuous marker, absence_time, observation_span,
/// last_gap, activity_window_sessions, gap_missing (1 for single-session
/// users, whose gap statistics are 0).
AggregateFeatures build_aggregates(const data::Dataset& dataset);

enum class StepGranularity { ActiveDay, Session };

struct SequenceConfig {
  int max_steps = 64;
  StepGranularity granularity = StepGranularity::ActiveDay;
};

void to_json(nlohmann::json& j, const SequenceConfig& c);
void from_json(const nlohmann::json& j, SequenceConfig& c);

struct SequenceStep {
  /// One index per schema discrete marker; value == cardinality marks "unknown".
  std::vector<int> discrete;
  /// Normalized continuous channels (see sequence_channel_names).
  std::vector<double> continuous;
};

/// Network input for one user plus the per-step return-time targets:
/// targets[j] is the gap from step j's last session end to the next step's
/// first session start; the final target is the user's final gap.
struct UserSequence {
  std::string user_id;
  std::vector<SequenceStep> steps;
  std::vector<double> targets;
  bool is_censored = false;
  double last_session_end = 0.0;
  /// horizon_end - last_session_end: the censoring threshold for this user.
  double horizon_gap = 0.0;
  /// prediction_start - last_session_end.
  double absence_time = 0.0;
  /// Active days in the observation window before truncation.
  int active_day_count = 0;

  std::size_t size() const { return steps.size(); }
};

struct SequenceSet {
  std::vector<UserSequence> sequences;
  NormStats stats;
};

/// elapsed_days, sessions, total_duration_days, then "sum_<marker>" per
/// continuous marker. All channels are log1p-compressed before z-scoring.
std::vector<std::string> sequence_channel_names(const data::MarkerSchema& schema);

/// Builds sequences. With no stats the statistics are fitted on this dataset
/// (training mode) and returned; otherwise the given stats are applied.
SequenceSet build_sequences(const data::Dataset& dataset, const SequenceConfig& config,
                            const std::optional<NormStats>& stats = std::nullopt);

/// Smallest k whose leading principal components explain more than
/// variance_threshold of the total variance of the rows of `embedding`.
/// Capped at the matrix rank (at least 1).
int select_embedding_dim(const Eigen::MatrixXd& embedding, double variance_threshold);
std::vector<int> select_embedding_dims(const std::vector<Eigen::MatrixXd>& embeddings,
                                       double variance_threshold);

}  // namespace rnnsm::features
