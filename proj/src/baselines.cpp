#include "rnnsm/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "rnnsm/errors.hpp"
#include "rnnsm/kernels.hpp"

namespace rnnsm::baselines {

namespace {

const char* targets_name(RnnTargets t) { return t == RnnTargets::FinalStep ? "final_step" : "all_steps"; }

RnnTargets parse_targets(const std::string& s) {
  if (s == "final_step") return RnnTargets::FinalStep;
  if (s == "all_steps") return RnnTargets::AllSteps;
  throw ConfigError("unknown rnn targets '" + s + "' (expected final_step or all_steps)");
}

// Mean and population sd of the regression targets.
std::pair<double, double> target_moments(const std::vector<features::UserSequence>& seqs, RnnTargets mode) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : seqs) {
    const std::size_t first = mode == RnnTargets::FinalStep ? s.targets.size() - 1 : 0;
    for (std::size_t j = first; j < s.targets.size(); ++j) {
      sum += s.targets[j];
      sq += s.targets[j] * s.targets[j];
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  return {mean, sd > 1e-12 ? sd : 1.0};
}

}  // namespace

std::vector<eval::PredictionRecord> baseline_predict(const data::Dataset& dataset) {
  std::vector<eval::PredictionRecord> out;
  out.reserve(dataset.users.size());
  for (const auto& u : dataset.users) {
    const double gap = std::max(0.0, dataset.window.prediction_start - u.last_session_end);
    out.push_back(eval::make_record(u, dataset.window, gap));
  }
  return out;
}

void to_json(nlohmann::json& j, const SimpleRnnConfig& c) {
  j = {{"sequence", c.sequence},
       {"hidden", c.hidden},
       {"fusion_width", c.fusion_width},
       {"embedding_width", c.embedding_width},
       {"targets", targets_name(c.targets)},
       {"training", c.training}};
}

void from_json(const nlohmann::json& j, SimpleRnnConfig& c) {
  SimpleRnnConfig d;
  c.sequence = j.contains("sequence") ? j.at("sequence").get<features::SequenceConfig>() : d.sequence;
  c.hidden = j.value("hidden", d.hidden);
  c.fusion_width = j.value("fusion_width", d.fusion_width);
  c.embedding_width = j.value("embedding_width", d.embedding_width);
  c.targets = parse_targets(j.value("targets", std::string(targets_name(d.targets))));
  c.training = d.training;
  if (j.contains("training")) train::from_json(j.at("training"), c.training);
  if (c.hidden < 1 || c.fusion_width < 1 || c.embedding_width < 1) {
    throw ConfigError("rnn widths must be >= 1");
  }
}

data::Dataset returning_only(const data::Dataset& dataset) {
  data::Dataset out;
  out.window = dataset.window;
  out.schema = dataset.schema;
  out.epoch_seconds = dataset.epoch_seconds;
  for (const auto& u : dataset.users)
    if (!u.is_censored) out.users.push_back(u);
  return out;
}

double mse_loss(const features::UserSequence& sequence, std::span<const double> outputs,
                std::span<double> grad_outputs, RnnTargets targets, double target_mean, double target_scale) {
  std::fill(grad_outputs.begin(), grad_outputs.end(), 0.0);
  if (sequence.is_censored) return 0.0;
  const std::size_t last = outputs.size() - 1;
  const std::size_t first = targets == RnnTargets::FinalStep ? last : 0;
  double loss = 0.0;
  for (std::size_t j = first; j <= last; ++j) {
    const double e = outputs[j] - (sequence.targets[j] - target_mean) / target_scale;
    loss += e * e;
    grad_outputs[j] = 2.0 * e;
  }
  return loss;
}

SimpleRnnModel simple_rnn_train(const data::Dataset& train_set, const SimpleRnnConfig& config) {
  const auto returning = returning_only(train_set);
  if (returning.users.empty()) throw ValidationError("simple rnn: no returning users to train on");
  const auto set = features::build_sequences(returning, config.sequence);

  SimpleRnnModel m;
  m.schema = train_set.schema;
  m.sequence = config.sequence;
  m.stats = set.stats;
  m.targets = config.targets;
  std::tie(m.target_mean, m.target_scale) = target_moments(set.sequences, config.targets);

  net::NetworkShape shape;
  for (const auto& d : m.schema.discrete) {
    shape.cardinalities.push_back(d.cardinality);
    shape.embedding_dims.push_back(config.embedding_width);
  }
  shape.continuous_width = static_cast<int>(set.stats.names.size());
  shape.fusion_width = config.fusion_width;
  shape.hidden = config.hidden;
  m.network = net::Network(shape, config.training.seed);
  m.network.output_bias() = 0.0;

  const auto mode = m.targets;
  const double mean = m.target_mean, scale = m.target_scale;
  const auto loss = [=](const features::UserSequence& s, std::span<const double> o, std::span<double> g) {
    return mse_loss(s, o, g, mode, mean, scale);
  };
  const auto trace = train::train_network(m.network, m.optimizer, set.sequences, loss, config.training);
  if (trace.diverged) throw NumericalError("simple rnn training diverged");
  m.loss_trace = trace.epoch_loss;
  return m;
}

std::vector<eval::PredictionRecord> simple_rnn_predict(const SimpleRnnModel& model, const data::Dataset& dataset) {
  if (dataset.schema != model.schema) throw SchemaError("dataset marker schema differs from the model's");
  const auto set = features::build_sequences(dataset, model.sequence, model.stats);
  const auto outputs = kernels::map_parallel(set.sequences.size(), [&](std::size_t i) {
    return model.network.forward(set.sequences[i]).output.back();
  });
  std::vector<eval::PredictionRecord> out;
  out.reserve(dataset.users.size());
  for (std::size_t i = 0; i < dataset.users.size(); ++i) {
    const double gap = std::max(0.0, model.target_mean + model.target_scale * outputs[i]);
    out.push_back(eval::make_record(dataset.users[i], dataset.window, gap));
  }
  return out;
}

nlohmann::json save_model(const SimpleRnnModel& model) {
  return {{"kind", "rnn"},
          {"targets", targets_name(model.targets)},
          {"target_mean", model.target_mean},
          {"target_scale", model.target_scale},
          {"sequence", model.sequence},
          {"schema", model.schema},
          {"loss_trace", model.loss_trace},
          {"checkpoint", net::save_checkpoint(model.network, model.optimizer, model.stats)}};
}

SimpleRnnModel load_simple_rnn(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "rnn") throw SchemaError("not a simple rnn model artifact");
    SimpleRnnModel m;
    auto ckpt = net::load_checkpoint(j.at("checkpoint"));
    m.network = std::move(ckpt.network);
    m.optimizer = std::move(ckpt.optimizer);
    m.stats = std::move(ckpt.stats);
    m.targets = parse_targets(j.at("targets").get<std::string>());
    m.target_mean = j.at("target_mean").get<double>();
    m.target_scale = j.at("target_scale").get<double>();
    m.sequence = j.at("sequence").get<features::SequenceConfig>();
    m.schema = j.at("schema").get<data::MarkerSchema>();
    m.loss_trace = j.value("loss_trace", std::vector<double>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed rnn model: ") + e.what());
  }
}

}  // namespace rnnsm::baselines
