#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rnnsm/errors.hpp"
#include "rnnsm/features.hpp"
#include "support.hpp"

using namespace rnnsm;
using testing::session;

namespace {

double column(const features::AggregateFeatures& agg, std::size_t row, const std::string& name) {
  const auto it = std::find(agg.names.begin(), agg.names.end(), name);
  REQUIRE(it != agg.names.end());
  return agg.rows[row][static_cast<std::size_t>(it - agg.names.begin())];
}

// Undo z-scoring and log1p for one sequence channel.
double raw_channel(const features::NormStats& stats, std::size_t c, double v) {
  return std::expm1(v * stats.sd[c] + stats.mean[c]);
}

}  // namespace

TEST_CASE("aggregates of a three-session user") {
  const data::WindowConfig w{3.0, 10.0, 20.0};
  const auto ds = data::assign_windows({session("a", 0.0), session("a", 2.0), session("a", 4.0)}, w, {});
  const auto agg = features::build_aggregates(ds);
  REQUIRE(agg.rows.size() == 1);
  CHECK(column(agg, 0, "session_count") == 3.0);
  CHECK(column(agg, 0, "mean_gap") == 2.0);
  CHECK(column(agg, 0, "std_gap") == 0.0);
  CHECK(column(agg, 0, "absence_time") == 6.0);
  CHECK(column(agg, 0, "observation_span") == 4.0);
  CHECK(column(agg, 0, "gap_missing") == 0.0);
  CHECK(agg.matrix().rows() == 1);
  CHECK(agg.matrix().cols() == static_cast<Eigen::Index>(agg.names.size()));
}

TEST_CASE("single-session users get zero gap statistics and the missing flag") {
  const data::WindowConfig w{3.0, 10.0, 20.0};
  const auto ds = data::assign_windows({session("a", 5.0)}, w, {});
  const auto agg = features::build_aggregates(ds);
  CHECK(column(agg, 0, "mean_gap") == 0.0);
  CHECK(column(agg, 0, "std_gap") == 0.0);
  CHECK(column(agg, 0, "gap_missing") == 1.0);
}

TEST_CASE("aggregate rows are finite with a fixed width") {
  const auto ds = testing::toy_dataset(30, 20, 3);
  const auto agg = features::build_aggregates(ds);
  for (const auto& row : agg.rows) {
    CHECK(row.size() == agg.names.size());
    for (double v : row) CHECK(std::isfinite(v));
    CHECK(column(agg, &row - agg.rows.data(), "absence_time") >= 0.0);
  }
}

TEST_CASE("z-scored columns have zero mean and unit sd") {
  std::mt19937_64 rng(17);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 200; ++i)
    rows.push_back({testing::uniform(rng, -5, 50), std::exp(testing::uniform(rng, 0, 4)), 3.0});
  const auto stats = features::NormStats::fit({"a", "b", "const"}, rows);
  for (auto& r : rows) stats.apply_in_place(r);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (const auto& r : rows) m += r[c];
    m /= rows.size();
    for (const auto& r : rows) v += (r[c] - m) * (r[c] - m);
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(std::sqrt(v / rows.size()) - 1.0) < 1e-9);
  }
  // A zero-spread column is centred, not scaled.
  for (const auto& r : rows) CHECK(r[2] == 0.0);

  std::vector<double> wrong = {1.0};
  CHECK_THROWS_AS(stats.apply_in_place(wrong), SchemaError);
}

TEST_CASE("sequences keep the most recent max_steps active days") {
  std::vector<data::Session> raw;
  for (int d = 0; d < 70; ++d) raw.push_back(session("a", 30.0 + d + 0.25));
  raw.push_back(session("a", 120.0));
  const auto ds = data::assign_windows(raw, {50.0, 100.0, 160.0}, {});
  REQUIRE(ds.users.size() == 1);
  const auto set = features::build_sequences(ds, {64, features::StepGranularity::ActiveDay});
  const auto& s = set.sequences[0];
  CHECK(s.size() == 64);
  CHECK(s.active_day_count == 70);
  CHECK(s.targets.back() == doctest::Approx(ds.users[0].final_gap));
  CHECK(s.targets.front() == doctest::Approx(1.0));
  CHECK_THROWS_AS(features::build_sequences(ds, {0, features::StepGranularity::ActiveDay}), ConfigError);
}

TEST_CASE("step grouping by active day") {
  const data::WindowConfig w{3.0, 10.0, 20.0};
  SUBCASE("one active day gives one step with elapsed 0") {
    const auto ds = data::assign_windows({session("a", 5.2)}, w, {});
    const auto set = features::build_sequences(ds, {});
    REQUIRE(set.sequences[0].size() == 1);
    CHECK(raw_channel(set.stats, 0, set.sequences[0].steps[0].continuous[0]) == doctest::Approx(0.0));
  }
  SUBCASE("two sessions on a day give sessions = 2") {
    const auto ds = data::assign_windows({session("a", 5.1, 0.01), session("a", 5.6, 0.01), session("b", 6.5),
                                          session("b", 7.5)},
                                         w, {});
    const auto set = features::build_sequences(ds, {});
    REQUIRE(set.sequences[0].size() == 1);
    CHECK(raw_channel(set.stats, 1, set.sequences[0].steps[0].continuous[1]) == doctest::Approx(2.0));
    REQUIRE(set.sequences[1].size() == 2);
    CHECK(raw_channel(set.stats, 1, set.sequences[1].steps[1].continuous[1]) == doctest::Approx(1.0));
    CHECK(raw_channel(set.stats, 0, set.sequences[1].steps[1].continuous[0]) == doctest::Approx(1.0));
  }
  SUBCASE("session granularity gives one step per session") {
    const auto ds = data::assign_windows({session("a", 5.1, 0.01), session("a", 5.6, 0.01)}, w, {});
    const auto set = features::build_sequences(ds, {64, features::StepGranularity::Session});
    CHECK(set.sequences[0].size() == 2);
    CHECK(set.sequences[0].targets[0] == doctest::Approx(0.49));
  }
}

TEST_CASE("sequence length, indices and frozen statistics") {
  const auto schema = data::MarkerSchema::defaults();
  std::mt19937_64 rng(8);
  std::vector<data::Session> raw;
  for (int u = 0; u < 40; ++u) {
    const int n = testing::uniform_int(rng, 1, 90);
    for (int k = 0; k < n; ++k) {
      auto s = session("u" + std::to_string(u), testing::uniform(rng, 0.0, 100.0), 0.01);
      s.discrete_markers["device"] = testing::uniform_int(rng, 0, 3);
      s.continuous_markers["pages_viewed"] = testing::uniform(rng, 1, 9);
      data::fill_calendar_markers(s, 1609459200, schema);
      raw.push_back(s);
    }
  }
  const auto ds = data::assign_windows(raw, {30.0, 100.0, 160.0}, schema);
  const auto train = features::build_sequences(ds, {});
  for (std::size_t i = 0; i < ds.users.size(); ++i) {
    const auto& s = train.sequences[i];
    CHECK(s.size() == static_cast<std::size_t>(std::min(ds.users[i].active_day_count(), 64)));
    CHECK(s.targets.size() == s.size());
    for (const auto& st : s.steps) {
      REQUIRE(st.discrete.size() == schema.discrete.size());
      for (std::size_t k = 0; k < st.discrete.size(); ++k) {
        CHECK(st.discrete[k] >= 0);
        CHECK(st.discrete[k] <= schema.discrete[k].cardinality);
      }
    }
  }

  // Test mode: stats are applied, never refitted, and unseen categories map to "unknown".
  auto test_raw = raw;
  for (auto& s : test_raw) s.discrete_markers.erase("device");
  const auto test_ds = data::assign_windows(test_raw, {30.0, 100.0, 160.0}, schema);
  const auto frozen = train.stats;
  const auto test = features::build_sequences(test_ds, {}, train.stats);
  CHECK(train.stats.mean == frozen.mean);
  CHECK(train.stats.sd == frozen.sd);
  CHECK(test.stats.mean == frozen.mean);
  for (const auto& s : test.sequences)
    for (const auto& st : s.steps) CHECK(st.discrete[0] == schema.discrete[0].cardinality);

  features::NormStats other = train.stats;
  other.names[0] = "something_else";
  CHECK_THROWS_AS(features::build_sequences(ds, {}, other), SchemaError);
}

TEST_CASE("embedding width from principal components") {
  Eigen::MatrixXd rank_one = Eigen::MatrixXd::Zero(3, 3);
  rank_one(0, 0) = 3.0;
  CHECK(features::select_embedding_dim(rank_one, 0.9) == 1);

  // Rows +-e_i: isotropic covariance in 4 dimensions.
  Eigen::MatrixXd iso(8, 4);
  iso << Eigen::MatrixXd::Identity(4, 4), -Eigen::MatrixXd::Identity(4, 4);
  CHECK(features::select_embedding_dim(iso, 0.9) == 4);
  CHECK(features::select_embedding_dim(iso, 0.7) == 3);

  // Rank 2 in 5 columns: k can never exceed the rank.
  Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(6, 5);
  r2.col(0) << 1, -1, 2, -2, 0, 0;
  r2.col(1) << 1, 1, -1, -1, 0.5, -0.5;
  CHECK(features::select_embedding_dim(r2, 0.999) == 2);
  CHECK(features::select_embedding_dims({rank_one, iso}, 0.9) == std::vector<int>{1, 4});
}
