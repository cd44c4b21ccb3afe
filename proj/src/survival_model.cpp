#include "rnnsm/survival_model.hpp"

#include <cmath>

#include "rnnsm/errors.hpp"
#include "rnnsm/kernels.hpp"

namespace rnnsm::tpp {

namespace {

net::NetworkShape make_shape(const data::MarkerSchema& schema, const std::vector<int>& dims,
                             std::size_t continuous_width, const RnnsmConfig& config) {
  net::NetworkShape shape;
  for (const auto& d : schema.discrete) shape.cardinalities.push_back(d.cardinality);
  shape.embedding_dims = dims;
  shape.continuous_width = static_cast<int>(continuous_width);
  shape.fusion_width = config.fusion_width;
  shape.hidden = config.hidden;
  return shape;
}

double mean_target(const std::vector<features::UserSequence>& sequences) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : sequences) {
    for (double t : s.targets) {
      sum += t;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 1.0;
}

RnnsmModel fresh_model(const net::NetworkShape& shape, const features::SequenceSet& set,
                       const data::MarkerSchema& schema, const RnnsmConfig& config, double w) {
  RnnsmModel m;
  m.network = net::Network(shape, config.training.seed);
  if (config.data_init_bias) m.network.output_bias() = -std::log(mean_target(set.sequences));
  m.stats = set.stats;
  m.sequence = config.sequence;
  m.schema = schema;
  m.w = w;
  return m;
}

std::vector<int> preliminary_dims(const net::NetworkShape& wide, const features::SequenceSet& set,
                                  const data::MarkerSchema& schema, const RnnsmConfig& config) {
  RnnsmModel prelim = fresh_model(wide, set, schema, config, config.w);
  auto training = config.training;
  training.epochs = config.preliminary_epochs;
  train(prelim, set.sequences, training);
  std::vector<Eigen::MatrixXd> tables;
  for (std::size_t k = 0; k < schema.discrete.size(); ++k) {
    // The trailing "unknown" row is excluded: it is never trained.
    tables.push_back(prelim.network.embedding_matrix(k).topRows(schema.discrete[k].cardinality));
  }
  return features::select_embedding_dims(tables, config.variance_threshold);
}

QuadratureOptions quadrature_for(const data::WindowConfig& window) {
  QuadratureOptions q;
  q.initial_upper = 4.0 * window.prediction_length();
  return q;
}

}  // namespace

void to_json(nlohmann::json& j, const RnnsmConfig& c) {
  j = {{"sequence", c.sequence},
       {"hidden", c.hidden},
       {"fusion_width", c.fusion_width},
       {"embedding_width", c.embedding_width},
       {"select_embedding_dims", c.select_embedding_dims},
       {"variance_threshold", c.variance_threshold},
       {"preliminary_epochs", c.preliminary_epochs},
       {"search_epochs", c.search_epochs},
       {"training", c.training},
       {"w_grid", c.w_grid},
       {"w", c.w},
       {"validation_fraction", c.validation_fraction},
       {"data_init_bias", c.data_init_bias}};
}

void from_json(const nlohmann::json& j, RnnsmConfig& c) {
  RnnsmConfig d;
  c.sequence = j.contains("sequence") ? j.at("sequence").get<features::SequenceConfig>() : d.sequence;
  c.hidden = j.value("hidden", d.hidden);
  c.fusion_width = j.value("fusion_width", d.fusion_width);
  c.embedding_width = j.value("embedding_width", d.embedding_width);
  c.select_embedding_dims = j.value("select_embedding_dims", d.select_embedding_dims);
  c.variance_threshold = j.value("variance_threshold", d.variance_threshold);
  c.preliminary_epochs = j.value("preliminary_epochs", d.preliminary_epochs);
  c.search_epochs = j.value("search_epochs", d.search_epochs);
  c.training = d.training;
  if (j.contains("training")) train::from_json(j.at("training"), c.training);
  c.w_grid = j.value("w_grid", d.w_grid);
  c.w = j.value("w", d.w);
  c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  c.data_init_bias = j.value("data_init_bias", d.data_init_bias);
  if (c.w <= 0.0) throw ConfigError("w must be > 0");
  if (c.preliminary_epochs < 0 || c.search_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  for (double w : c.w_grid)
    if (w <= 0.0) throw ConfigError("every w in w_grid must be > 0");
}

SequenceLoss sequence_loss(std::span<const double> outputs, std::span<const double> targets,
                           bool is_censored, double w) {
  if (outputs.size() != targets.size() || outputs.empty()) {
    throw ValidationError("sequence_loss: outputs and targets must have the same non-zero length");
  }
  SequenceLoss r;
  r.grad_o.resize(outputs.size());
  const std::size_t last = outputs.size() - 1;
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    if (is_censored && j == last) {
      const double ls = log_survival(outputs[j], w, targets[j]);
      r.loss -= ls;
      r.grad_o[j] = -ls;  // d(log S)/do = log S
    } else {
      const double ls = log_survival(outputs[j], w, targets[j]);
      r.loss -= outputs[j] + w * targets[j] + ls;
      r.grad_o[j] = -(1.0 + ls);
    }
  }
  return r;
}

train::SequenceLossFn make_loss(double w) {
  return [w](const features::UserSequence& s, std::span<const double> o, std::span<double> grad) {
    auto r = sequence_loss(o, s.targets, s.is_censored, w);
    std::copy(r.grad_o.begin(), r.grad_o.end(), grad.begin());
    return r.loss;
  };
}

train::TrainingTrace train(RnnsmModel& model, const std::vector<features::UserSequence>& sequences,
                           const train::TrainingConfig& config) {
  auto trace = train::train_network(model.network, model.optimizer, sequences, make_loss(model.w), config);
  model.loss_trace = trace.epoch_loss;
  return trace;
}

RnnsmModel fit(const data::Dataset& train_set, const RnnsmConfig& config) {
  if (train_set.users.empty()) throw ValidationError("rnnsm fit: empty training set");
  if (train_set.returning_indices().empty() || train_set.nonreturning_indices().empty()) {
    throw ValidationError("rnnsm fit: both returning and censored users are required");
  }
  const auto& schema = train_set.schema;
  const auto set = features::build_sequences(train_set, config.sequence);
  const std::size_t width = set.stats.names.size();

  std::vector<int> dims(schema.discrete.size(), config.embedding_width);
  if (config.select_embedding_dims && !schema.discrete.empty()) {
    dims = preliminary_dims(make_shape(schema, dims, width, config), set, schema, config);
  }
  const auto shape = make_shape(schema, dims, width, config);

  double best_w = config.w;
  std::vector<std::pair<double, double>> search;
  if (!config.w_grid.empty()) {
    const auto [inner, validation] =
        data::stratified_split(train_set, config.validation_fraction, config.training.seed + 1);
    const auto inner_set = features::build_sequences(inner, config.sequence);
    double best_c = -1.0;
    auto search_training = config.training;
    search_training.epochs = config.search_epochs;
    for (double w : config.w_grid) {
      RnnsmModel candidate = fresh_model(shape, inner_set, schema, config, w);
      const auto trace = train(candidate, inner_set.sequences, search_training);
      double c = 0.0;
      if (!trace.diverged) {
        try {
          c = eval::concordance_index(predict(candidate, validation, false));
        } catch (const NumericalError&) {
          c = 0.0;
        }
      }
      search.emplace_back(w, c);
      if (c > best_c) {
        best_c = c;
        best_w = w;
      }
    }
  }

  RnnsmModel model = fresh_model(shape, set, schema, config, best_w);
  const auto trace = train(model, set.sequences, config.training);
  if (trace.diverged) throw NumericalError("rnnsm training diverged (w=" + std::to_string(best_w) + ")");
  model.w_search = std::move(search);
  return model;
}

std::vector<double> last_outputs(const RnnsmModel& model, const std::vector<features::UserSequence>& sequences) {
  return kernels::map_parallel(sequences.size(), [&](std::size_t i) {
    return model.network.forward(sequences[i]).output.back();
  });
}

std::vector<eval::PredictionRecord> predict(const RnnsmModel& model, const data::Dataset& dataset,
                                            bool condition_on_absence) {
  if (dataset.schema != model.schema) throw SchemaError("dataset marker schema differs from the model's");
  const auto set = features::build_sequences(dataset, model.sequence, model.stats);
  const auto outputs = last_outputs(model, set.sequences);
  const auto q = quadrature_for(dataset.window);
  const double w = model.w;

  const auto gaps = kernels::map_parallel(set.sequences.size(), [&](std::size_t i) {
    const double t_s = set.sequences[i].absence_time;
    return condition_on_absence ? absence_conditioned_expectation(outputs[i], w, t_s, q).value
                                : expected_return_time(outputs[i], w, q).value;
  });

  std::vector<eval::PredictionRecord> records;
  records.reserve(dataset.users.size());
  for (std::size_t i = 0; i < dataset.users.size(); ++i) {
    auto r = eval::make_record(dataset.users[i], dataset.window, gaps[i]);
    const auto& s = set.sequences[i];
    r.nonreturn_probability = condition_on_absence
                                  ? survival(outputs[i] + w * s.absence_time, w, s.horizon_gap - s.absence_time)
                                  : survival(outputs[i], w, s.horizon_gap);
    records.push_back(std::move(r));
  }
  return records;
}

nlohmann::json save_model(const RnnsmModel& model) {
  nlohmann::json j;
  j["kind"] = "rnnsm";
  j["w"] = model.w;
  j["sequence"] = model.sequence;
  j["schema"] = model.schema;
  j["loss_trace"] = model.loss_trace;
  auto& search = j["w_search"] = nlohmann::json::array();
  for (const auto& [w, c] : model.w_search) search.push_back({{"w", w}, {"concordance", c}});
  j["checkpoint"] = net::save_checkpoint(model.network, model.optimizer, model.stats);
  return j;
}

RnnsmModel load_model(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "rnnsm") throw SchemaError("not an rnnsm model artifact");
    RnnsmModel m;
    auto ckpt = net::load_checkpoint(j.at("checkpoint"));
    m.network = std::move(ckpt.network);
    m.optimizer = std::move(ckpt.optimizer);
    m.stats = std::move(ckpt.stats);
    m.w = j.at("w").get<double>();
    m.sequence = j.at("sequence").get<features::SequenceConfig>();
    m.schema = j.at("schema").get<data::MarkerSchema>();
    m.loss_trace = j.value("loss_trace", std::vector<double>{});
    for (const auto& e : j.value("w_search", nlohmann::json::array())) {
      m.w_search.emplace_back(e.at("w").get<double>(), e.at("concordance").get<double>());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed rnnsm model: ") + e.what());
  }
}

}  // namespace rnnsm::tpp
