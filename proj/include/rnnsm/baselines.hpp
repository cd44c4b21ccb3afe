#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnnsm/data.hpp"
#include "rnnsm/evaluation.hpp"
#include "rnnsm/features.hpp"
#include "rnnsm/net.hpp"
#include "rnnsm/training.hpp"

namespace rnnsm::baselines {

/// Last-seen baseline: predicted gap = prediction_start - last_session_end.
std::vector<eval::PredictionRecord> baseline_predict(const data::Dataset& dataset);

enum class RnnTargets {
  /// Only the final gap of each returning user.
  FinalStep,
  /// Every uncensored per-step gap of returning users.
  AllSteps,
};

struct SimpleRnnConfig {
  features::SequenceConfig sequence;
  int hidden = 16;
  int fusion_width = 16;
  int embedding_width = 4;
  RnnTargets targets = RnnTargets::FinalStep;
  train::TrainingConfig training{10, 32, {0.003}, 7};
};

void to_json(nlohmann::json& j, const SimpleRnnConfig& c);
void from_json(const nlohmann::json& j, SimpleRnnConfig& c);

/// LSTM with a single linear output neuron regressing the gap in days.
/// Internally the output is o' = (gap - target_mean) / target_scale; the
/// prediction is max(0, target_mean + target_scale * o').
struct SimpleRnnModel {
  net::Network network;
  net::AdamState optimizer;
  features::NormStats stats;
  features::SequenceConfig sequence;
  data::MarkerSchema schema;
  RnnTargets targets = RnnTargets::FinalStep;
  double target_mean = 0.0;
  double target_scale = 1.0;
  std::vector<double> loss_trace;
};

/// Squared error of the standardized outputs; censored sequences contribute 0.
double mse_loss(const features::UserSequence& sequence, std::span<const double> outputs,
                std::span<double> grad_outputs, RnnTargets targets, double target_mean, double target_scale);

/// Returning users only; censored users are dropped before anything is fitted.
SimpleRnnModel simple_rnn_train(const data::Dataset& train_set, const SimpleRnnConfig& config);

std::vector<eval::PredictionRecord> simple_rnn_predict(const SimpleRnnModel& model, const data::Dataset& dataset);

nlohmann::json save_model(const SimpleRnnModel& model);
SimpleRnnModel load_simple_rnn(const nlohmann::json& j);

/// Users of `dataset` that returned within the prediction window.
data::Dataset returning_only(const data::Dataset& dataset);

}  // namespace rnnsm::baselines
