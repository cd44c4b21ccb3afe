#include "rnnsm/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "rnnsm/errors.hpp"
#include "rnnsm/io.hpp"

namespace rnnsm::experiment {

namespace {

const std::set<std::string> kTopLevelKeys = {"data", "window", "schema", "models", "rnnsm", "rnn",
                                             "cox", "seed", "test_fraction", "out", "threads"};

template <typename T>
T parse_section(const nlohmann::json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"baseline", "rnn", "cph", "cpha", "rnnsm", "rnnsma"};
  return names;
}

bool is_model_name(const std::string& name) {
  const auto& n = model_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json data = nlohmann::json::object();
  if (data_path) data["path"] = *data_path;
  if (generator) data["generate"] = *generator;
  nlohmann::json j = {{"data", data},
                      {"schema", schema},
                      {"models", models},
                      {"rnnsm", rnnsm},
                      {"rnn", rnn},
                      {"cox", cox},
                      {"seed", seed},
                      {"test_fraction", test_fraction}};
  if (window) j["window"] = *window;
  return j;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  if (config.generator) config.generator->seed = seed;
  config.rnnsm.training.seed = seed;
  config.rnn.training.seed = seed;
}

RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kTopLevelKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig c;
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (d.contains("path")) c.data_path = d.at("path").get<std::string>();
    if (d.contains("generate")) {
      c.generator = parse_section<synth::GeneratorConfig>(d, "generate", synth::GeneratorConfig::defaults());
    }
    if (c.data_path && c.generator) throw ConfigError("data: give either 'path' or 'generate', not both");
  }
  if (!c.data_path && !c.generator) c.generator = synth::GeneratorConfig::defaults();
  if (j.contains("window")) {
    c.window = j.at("window");
    if (c.window->is_string()) {
      // A path to a window file, such as the one written by `generate`.
      std::ifstream in(c.window->get<std::string>());
      if (!in) throw ConfigError("cannot open window file '" + c.window->get<std::string>() + "'");
      try {
        c.window = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("window file is not valid JSON: ") + e.what());
      }
    }
  }
  c.schema = parse_section(j, "schema", c.schema);
  c.models = parse_section(j, "models", model_names());
  for (const auto& m : c.models)
    if (!is_model_name(m)) throw ConfigError("unknown model '" + m + "'");
  c.rnnsm = parse_section(j, "rnnsm", c.rnnsm);
  c.rnn = parse_section(j, "rnn", c.rnn);
  c.cox = parse_section(j, "cox", c.cox);
  c.test_fraction = parse_section(j, "test_fraction", c.test_fraction);
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  c.out = parse_section(j, "out", c.out);
  c.threads = parse_section(j, "threads", c.threads);
  apply_seed(c, parse_section<std::uint64_t>(j, "seed", c.seed));
  if (c.generator) c.generator->validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return parse_run_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

LoadedData load_data(const RunConfig& config) {
  LoadedData out;
  std::vector<data::Session> sessions;
  std::int64_t epoch = 0;
  data::WindowConfig window;
  if (config.generator) {
    auto g = synth::generate(*config.generator);
    sessions = std::move(g.sessions);
    epoch = g.epoch_seconds;
    out.truth = std::move(g.truth);
    window = config.window ? io::resolve_window(*config.window, epoch) : g.window;
  } else {
    if (!config.window) throw ConfigError("a window is required when reading sessions from a file");
    auto log = io::read_sessions_jsonl(*config.data_path, config.schema);
    sessions = std::move(log.sessions);
    epoch = log.epoch_seconds;
    window = io::resolve_window(*config.window, epoch);
  }
  try {
    window.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("window: ") + e.what());
  }
  out.dataset = data::assign_windows(std::move(sessions), window, config.schema);
  out.dataset.epoch_seconds = epoch;
  return out;
}

Split split(const data::Dataset& dataset, const RunConfig& config) {
  auto [train, test] = data::stratified_split(dataset, config.test_fraction, config.seed);
  return {std::move(train), std::move(test)};
}

std::string family_of(const std::string& model) {
  if (model == "cph" || model == "cpha") return "cox";
  if (model == "rnnsm" || model == "rnnsma") return "rnnsm";
  if (model == "baseline" || model == "rnn") return model;
  throw ConfigError("unknown model '" + model + "'");
}

nlohmann::json train_model(const std::string& model, const data::Dataset& train_set, const RunConfig& config) {
  const auto family = family_of(model);
  nlohmann::json artifact = {{"family", family}, {"schema", train_set.schema}, {"window", train_set.window}};
  if (family == "baseline") {
    artifact["model"] = nlohmann::json::object();
  } else if (family == "rnn") {
    artifact["model"] = baselines::save_model(baselines::simple_rnn_train(train_set, config.rnn));
  } else if (family == "cox") {
    artifact["model"] = cox::save_model(cox::fit_dataset(train_set, config.cox));
  } else {
    artifact["model"] = tpp::save_model(tpp::fit(train_set, config.rnnsm));
  }
  return artifact;
}

std::vector<eval::PredictionRecord> predict_model(const std::string& model, const nlohmann::json& artifact,
                                                  const data::Dataset& dataset) {
  const auto family = family_of(model);
  if (!artifact.is_object() || artifact.value("family", std::string()) != family) {
    throw SchemaError("model artifact is not a '" + family + "' model (needed for " + model + ")");
  }
  try {
    if (artifact.at("schema").get<data::MarkerSchema>() != dataset.schema) {
      throw SchemaError("dataset marker schema differs from the one the model was trained with");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model artifact: ") + e.what());
  }
  const auto& m = artifact.at("model");
  if (family == "baseline") return baselines::baseline_predict(dataset);
  if (family == "rnn") return baselines::simple_rnn_predict(baselines::load_simple_rnn(m), dataset);
  if (family == "cox") return cox::predict(cox::load_model(m), dataset, model == "cpha");
  return tpp::predict(tpp::load_model(m), dataset, model == "rnnsma");
}

PipelineResult run_pipeline(const RunConfig& config) { return run_pipeline(config, load_data(config).dataset); }

PipelineResult run_pipeline(const RunConfig& config, const data::Dataset& dataset) {
  PipelineResult r;
  r.censored_fraction = dataset.censored_fraction();
  const auto parts = split(dataset, config);
  r.train_users = parts.train.users.size();
  r.test_users = parts.test.users.size();
  for (const auto& model : config.models) {
    const auto family = family_of(model);
    if (!r.artifacts.count(family)) r.artifacts[family] = train_model(model, parts.train, config);
    r.predictions[model] = predict_model(model, r.artifacts[family], parts.test);
  }
  r.report = eval::evaluate(r.predictions);
  return r;
}

nlohmann::json manifest(const RunConfig& config, const std::string& command) {
  return {{"command", command},
          {"config_hash", config.hash()},
          {"seed", config.seed},
          {"models", config.models},
          {"version", kVersion},
          {"json_library", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                               std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                               std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__},
          {"config", config.to_json()}};
}

}  // namespace rnnsm::experiment
