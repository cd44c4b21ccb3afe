#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rnnsm/errors.hpp"
#include "rnnsm/evaluation.hpp"
#include "rnnsm/experiment.hpp"
#include "rnnsm/io.hpp"
#include "rnnsm/kernels.hpp"
#include "rnnsm/synth.hpp"

namespace fs = std::filesystem;
using namespace rnnsm;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> models;
  std::string out;
  int threads = 0;
  std::string checkpoint;
  std::vector<std::string> prediction_files;
};

experiment::RunConfig resolve_config(const Options& o) {
  auto c = o.config_path.empty() ? experiment::parse_run_config(nlohmann::json::object())
                                 : experiment::load_run_config(o.config_path);
  if (o.seed) experiment::apply_seed(c, *o.seed);
  if (!o.out.empty()) c.out = o.out;
  if (o.threads > 0) c.threads = o.threads;
  if (!o.models.empty()) {
    std::vector<std::string> models;
    for (const auto& m : o.models) {
      if (m == "all") {
        models = experiment::model_names();
        break;
      }
      if (!experiment::is_model_name(m)) throw ConfigError("unknown model '" + m + "'");
      models.push_back(m);
    }
    c.models = models;
  }
  if (c.threads > 0) kernels::set_thread_count(c.threads);
  fs::create_directories(c.out);
  return c;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("missing file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + " is not valid JSON: " + e.what());
  }
}

int cmd_generate(const Options& o) {
  auto c = resolve_config(o);
  if (!c.generator) throw ConfigError("generate needs a data.generate section, not a data path");
  const auto g = synth::generate(*c.generator);
  const fs::path out = c.out;
  {
    std::ofstream f(out / "sessions.jsonl");
    io::write_sessions_jsonl(f, g.sessions, g.epoch_seconds);
  }
  {
    std::ofstream f(out / "ground_truth.csv");
    synth::write_ground_truth_csv(f, g.truth);
  }
  const auto iso = [&](double day) { return io::format_iso8601(static_cast<double>(g.epoch_seconds) + day * 86400.0); };
  write_json(out / "window.json", {{"activity_start", iso(g.window.activity_start)},
                                   {"prediction_start", iso(g.window.prediction_start)},
                                   {"horizon_end", iso(g.window.horizon_end)}});
  write_json(out / "generator.json", *c.generator);
  write_json(out / "manifest_generate.json", experiment::manifest(c, "generate"));
  std::printf("wrote %zu sessions for %d users to %s\n", g.sessions.size(), c.generator->user_count,
              (out / "sessions.jsonl").c_str());
  return kOk;
}

int cmd_train(const Options& o) {
  auto c = resolve_config(o);
  const auto loaded = experiment::load_data(c);
  const auto parts = experiment::split(loaded.dataset, c);
  const fs::path out = c.out;
  std::map<std::string, nlohmann::json> trained;
  for (const auto& model : c.models) {
    const auto family = experiment::family_of(model);
    const auto checkpoint = "checkpoint_" + family + ".json";
    if (!trained.count(family)) {
      trained[family] = experiment::train_model(model, parts.train, c);
      write_json(out / checkpoint, trained[family]);
    }
    write_json(out / ("model_" + model + ".json"), {{"model", model},
                                                    {"family", family},
                                                    {"checkpoint", checkpoint},
                                                    {"config_hash", c.hash()},
                                                    {"seed", c.seed},
                                                    {"version", experiment::kVersion},
                                                    {"schema", parts.train.schema},
                                                    {"window", parts.train.window},
                                                    {"train_users", parts.train.users.size()}});
    std::printf("trained %s -> %s\n", model.c_str(), (out / checkpoint).c_str());
  }
  write_json(out / "manifest_train.json", experiment::manifest(c, "train"));
  return kOk;
}

int cmd_predict(const Options& o) {
  auto c = resolve_config(o);
  const fs::path out = c.out;
  const auto loaded = experiment::load_data(c);
  const auto parts = experiment::split(loaded.dataset, c);
  for (const auto& model : c.models) {
    fs::path checkpoint = o.checkpoint;
    if (checkpoint.empty()) {
      const auto meta = read_json(out / ("model_" + model + ".json"));
      if (meta.value("model", std::string()) != model) throw SchemaError("model metadata names another model");
      if (meta.contains("schema") && meta.at("schema").get<data::MarkerSchema>() != parts.test.schema) {
        throw SchemaError("model " + model + " was trained with a different marker schema");
      }
      checkpoint = out / meta.value("checkpoint", std::string());
    }
    if (!fs::exists(checkpoint)) throw SchemaError("missing checkpoint " + checkpoint.string());
    const auto records = experiment::predict_model(model, read_json(checkpoint), parts.test);
    std::ofstream f(out / ("predictions_" + model + ".csv"));
    eval::write_predictions_csv(f, records, parts.test.epoch_seconds);
    std::printf("predicted %zu users with %s\n", records.size(), model.c_str());
  }
  write_json(out / "manifest_predict.json", experiment::manifest(c, "predict"));
  return kOk;
}

void write_report(const fs::path& out, const eval::EvaluationReport& report) {
  write_json(out / "report.json", report.to_json());
  {
    std::ofstream f(out / "rmse_by_week.csv");
    report.write_week_csv(f);
  }
  {
    std::ofstream f(out / "rmse_by_active_days.csv");
    report.write_active_days_csv(f);
  }
  std::cout << report.table();
}

int cmd_evaluate(const Options& o) {
  auto c = resolve_config(o);
  const fs::path out = c.out;
  std::map<std::string, std::vector<eval::PredictionRecord>> predictions;
  if (!o.prediction_files.empty()) {
    for (const auto& file : o.prediction_files) {
      std::ifstream in(file);
      if (!in) throw SchemaError("missing predictions file " + file);
      auto name = fs::path(file).stem().string();
      if (name.rfind("predictions_", 0) == 0) name = name.substr(12);
      predictions[name] = eval::read_predictions_csv(in);
    }
  } else {
    for (const auto& model : c.models) {
      const auto file = out / ("predictions_" + model + ".csv");
      std::ifstream in(file);
      if (!in) {
        if (o.models.empty()) continue;
        throw SchemaError("missing predictions file " + file.string());
      }
      predictions[model] = eval::read_predictions_csv(in);
    }
  }
  if (predictions.empty()) throw SchemaError("no prediction files to evaluate in " + out.string());
  write_report(out, eval::evaluate(predictions));
  write_json(out / "manifest_evaluate.json", experiment::manifest(c, "evaluate"));
  return kOk;
}

int cmd_run(const Options& o) {
  auto c = resolve_config(o);
  const fs::path out = c.out;
  const auto loaded = experiment::load_data(c);
  const auto result = experiment::run_pipeline(c, loaded.dataset);
  for (const auto& [model, records] : result.predictions) {
    std::ofstream f(out / ("predictions_" + model + ".csv"));
    eval::write_predictions_csv(f, records, loaded.dataset.epoch_seconds);
  }
  for (const auto& [family, artifact] : result.artifacts) write_json(out / ("checkpoint_" + family + ".json"), artifact);
  std::printf("users %zu (train %zu, test %zu), censored fraction %.3f\n", loaded.dataset.users.size(),
              result.train_users, result.test_users, result.censored_fraction);
  write_report(out, result.report);
  write_json(out / "manifest_run.json", experiment::manifest(c, "run"));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Return-time prediction with recurrent survival models, Cox models and baselines"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Run configuration (JSON)");
    sub->add_option("--seed", o.seed, "Seed for generation, splitting and training");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--threads", o.threads, "OpenMP threads for per-user kernels")->check(CLI::NonNegativeNumber);
  };
  auto with_models = [&](CLI::App* sub) {
    sub->add_option("--model", o.models, "baseline, rnn, cph, cpha, rnnsm, rnnsma or all")->delimiter(',');
  };

  auto* gen = app.add_subcommand("generate", "Write a synthetic session log, ground truth and window");
  common(gen);
  auto* train = app.add_subcommand("train", "Train models on the training split");
  common(train);
  with_models(train);
  auto* predict = app.add_subcommand("predict", "Predict the test split with trained models");
  common(predict);
  with_models(predict);
  predict->add_option("--checkpoint", o.checkpoint, "Checkpoint to use instead of the one named by the model file");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate prediction CSVs into a report");
  common(evaluate);
  with_models(evaluate);
  evaluate->add_option("--predictions", o.prediction_files, "Prediction CSVs (default: predictions_<model>.csv)");
  auto* run = app.add_subcommand("run", "Train, predict and evaluate every configured model");
  common(run);
  with_models(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*train) return cmd_train(o);
    if (*predict) return cmd_predict(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*run) return cmd_run(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const SchemaError& e) {
    std::cerr << "data/model mismatch: " << e.what() << '\n';
    return kData;
  } catch (const ValidationError& e) {
    std::cerr << "invalid data: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
