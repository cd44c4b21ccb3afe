#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rnnsm_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + RNNSM_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump();
  return p;
}

const nlohmann::json kSmall = {{"data", {{"generate", {{"user_count", 200}}}}}};

}  // namespace

TEST_CASE("cli generate is reproducible") {
  const auto dir = scratch("generate");
  const auto cfg = write_config(dir, kSmall);
  REQUIRE(run("generate --config " + cfg.string() + " --seed 5 --out " + (dir / "a").string()) == 0);
  REQUIRE(run("generate --config " + cfg.string() + " --seed 5 --out " + (dir / "b").string()) == 0);
  for (const char* f : {"sessions.jsonl", "ground_truth.csv", "window.json"}) {
    CHECK(fs::exists(dir / "a" / f));
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK_FALSE(slurp(dir / "a" / "sessions.jsonl").empty());
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("errors");
  auto bad = kSmall;
  bad["data"]["generate"]["cohorts"] = {{{"name", "only"}, {"fraction", 0.4}, {"mu", 0.0}, {"sigma", 1.0}}};
  const auto cfg = write_config(dir, bad);
  CHECK(run("generate --config " + cfg.string() + " --out " + dir.string()) == 2);
  CHECK(run("generate --config " + (dir / "nope.json").string() + " --out " + dir.string()) == 2);
  CHECK(run("bogus") == 2);

  const auto ok = write_config(dir, kSmall);
  CHECK(run("predict --config " + ok.string() + " --model rnnsm --checkpoint " + (dir / "missing.json").string() +
            " --out " + dir.string()) == 3);
  fs::remove_all(dir);
}

TEST_CASE("cli run and evaluate with one model") {
  const auto dir = scratch("evaluate");
  const auto cfg = write_config(dir, kSmall);
  REQUIRE(run("run --config " + cfg.string() + " --model baseline --out " + dir.string()) == 0);
  REQUIRE(fs::exists(dir / "predictions_baseline.csv"));
  fs::remove(dir / "report.json");
  REQUIRE(run("evaluate --config " + cfg.string() + " --predictions " + (dir / "predictions_baseline.csv").string() +
              " --out " + dir.string()) == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report.at("models").size() == 1);
  CHECK(report.at("models").contains("baseline"));
  const auto week = slurp(dir / "rmse_by_week.csv");
  CHECK(week.rfind("model,week,count,rmse,mean_error\n", 0) == 0);
  fs::remove_all(dir);
}
