#pragma once

#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnnsm/data.hpp"
#include "rnnsm/evaluation.hpp"
#include "rnnsm/features.hpp"
#include "rnnsm/net.hpp"
#include "rnnsm/survival_process.hpp"
#include "rnnsm/training.hpp"

namespace rnnsm::tpp {

/// Architecture and training settings of the recurrent survival model.
struct RnnsmConfig {
  features::SequenceConfig sequence;
  int hidden = 16;
  int fusion_width = 16;
  /// Width of every embedding in the preliminary run (and the final run when
  /// dimension selection is off).
  int embedding_width = 10;
  bool select_embedding_dims = true;
  double variance_threshold = 0.9;
  int preliminary_epochs = 5;
  /// Epochs for each w candidate during the grid search.
  int search_epochs = 15;
  train::TrainingConfig training{40, 16, {0.01}, 7};
  /// Candidate w values ranked by validation concordance. Empty: use `w`.
  std::vector<double> w_grid = {0.01, 0.05, 0.1, 0.5, 1.0};
  double w = 0.05;
  double validation_fraction = 0.2;
  /// Initialize the output bias to -log(mean training gap).
  bool data_init_bias = true;
};

void to_json(nlohmann::json& j, const RnnsmConfig& c);
void from_json(const nlohmann::json& j, RnnsmConfig& c);

struct RnnsmModel {
  net::Network network;
  net::AdamState optimizer;
  features::NormStats stats;
  features::SequenceConfig sequence;
  data::MarkerSchema schema;
  double w = 0.05;
  std::vector<double> loss_trace;
  /// (w, validation concordance) for every grid candidate tried.
  std::vector<std::pair<double, double>> w_search;
};

struct SequenceLoss {
  double loss = 0.0;
  std::vector<double> grad_o;
};

/// -sum_j l(target_j | o_j). Every step uses the returning log-density
/// except the last step of a censored user, which uses the log-survival.
SequenceLoss sequence_loss(std::span<const double> outputs, std::span<const double> targets,
                           bool is_censored, double w);

/// The loss above as a training callback for a fixed w.
train::SequenceLossFn make_loss(double w);

/// Trains `model.network` in place on prepared sequences.
train::TrainingTrace train(RnnsmModel& model, const std::vector<features::UserSequence>& sequences,
                           const train::TrainingConfig& config);

/// Full fit on a training dataset: normalization statistics, optional PCA
/// embedding-width selection from a preliminary run, w grid search on a
/// stratified validation split, then a final run on all training users.
RnnsmModel fit(const data::Dataset& train_set, const RnnsmConfig& config);

/// Output o of the last step for every user (inputs built with model stats).
std::vector<double> last_outputs(const RnnsmModel& model, const std::vector<features::UserSequence>& sequences);

/// Expected return gap per user (RNNSM), or the expectation conditioned on
/// the gap exceeding the user's absence time at prediction_start (RNNSMA).
std::vector<eval::PredictionRecord> predict(const RnnsmModel& model, const data::Dataset& dataset,
                                            bool condition_on_absence);

nlohmann::json save_model(const RnnsmModel& model);
RnnsmModel load_model(const nlohmann::json& j);

}  // namespace rnnsm::tpp
