#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnnsm/baselines.hpp"
#include "rnnsm/cox.hpp"
#include "rnnsm/data.hpp"
#include "rnnsm/evaluation.hpp"
#include "rnnsm/survival_model.hpp"
#include "rnnsm/synth.hpp"

namespace rnnsm::experiment {

inline constexpr const char* kVersion = "0.3.0";

/// baseline, rnn, cph, cpha, rnnsm, rnnsma.
const std::vector<std::string>& model_names();
bool is_model_name(const std::string& name);

/// One experiment run. Either `data_path` (session JSONL) or `generator`
/// provides the sessions. `seed` overrides the generator, split and
/// training seeds so one number pins the whole run.
struct RunConfig {
  std::optional<std::string> data_path;
  std::optional<synth::GeneratorConfig> generator;
  /// Raw window bounds (days or ISO strings); absent for generated data
  /// means the generator window.
  std::optional<nlohmann::json> window;
  data::MarkerSchema schema = data::MarkerSchema::defaults();
  std::vector<std::string> models;
  tpp::RnnsmConfig rnnsm;
  baselines::SimpleRnnConfig rnn;
  cox::CoxFitOptions cox;
  std::uint64_t seed = 7;
  double test_fraction = 0.2;
  std::string out = "out";
  int threads = 0;

  /// Canonical JSON (after applying the seed override).
  nlohmann::json to_json() const;
  /// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

/// Throws ConfigError on unknown keys, bad values or unknown model names.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
/// Pushes `seed` into every seeded component.
void apply_seed(RunConfig& config, std::uint64_t seed);

std::uint64_t fnv1a64(const std::string& bytes);

struct LoadedData {
  data::Dataset dataset;
  std::vector<synth::GroundTruth> truth;
};

/// Reads or generates the sessions and assigns windows.
LoadedData load_data(const RunConfig& config);

struct Split {
  data::Dataset train;
  data::Dataset test;
};
Split split(const data::Dataset& dataset, const RunConfig& config);

/// Model family trained for a model name: cph/cpha share "cox", rnnsm/rnnsma share "rnnsm".
std::string family_of(const std::string& model);

/// Trains the family behind `model` and returns its artifact JSON.
nlohmann::json train_model(const std::string& model, const data::Dataset& train_set, const RunConfig& config);

/// Predictions of `model` from a trained artifact of its family. Throws
/// SchemaError when the artifact does not match the model or the data.
std::vector<eval::PredictionRecord> predict_model(const std::string& model, const nlohmann::json& artifact,
                                                  const data::Dataset& dataset);

struct PipelineResult {
  std::map<std::string, std::vector<eval::PredictionRecord>> predictions;
  std::map<std::string, nlohmann::json> artifacts;
  eval::EvaluationReport report;
  double censored_fraction = 0.0;
  std::size_t train_users = 0;
  std::size_t test_users = 0;
};

/// Train every configured model on the training split, predict the test split, evaluate.
PipelineResult run_pipeline(const RunConfig& config);
PipelineResult run_pipeline(const RunConfig& config, const data::Dataset& dataset);

/// Manifest for reproducibility: command, config hash, seed, versions.
nlohmann::json manifest(const RunConfig& config, const std::string& command);

}  // namespace rnnsm::experiment
