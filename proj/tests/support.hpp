#pragma once

// Small builders and random generators shared by the test files.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rnnsm/data.hpp"
#include "rnnsm/evaluation.hpp"
#include "rnnsm/features.hpp"
#include "rnnsm/net.hpp"

namespace testing {

inline rnnsm::data::Session session(const std::string& user, double start, double duration = 0.0) {
  rnnsm::data::Session s;
  s.user_id = user;
  s.start_time = start;
  s.duration = duration;
  return s;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline rnnsm::net::NetworkShape small_shape(int discrete = 2, int continuous = 3, int fusion = 4, int hidden = 3) {
  rnnsm::net::NetworkShape s;
  for (int k = 0; k < discrete; ++k) {
    s.cardinalities.push_back(3 + k);
    s.embedding_dims.push_back(2);
  }
  s.continuous_width = continuous;
  s.fusion_width = fusion;
  s.hidden = hidden;
  return s;
}

/// Network with every parameter uniform in [-scale, scale] (embedding rows
/// keep their norm only if scale is small; callers project when needed).
inline rnnsm::net::Network random_network(const rnnsm::net::NetworkShape& shape, std::uint64_t seed,
                                          double scale = 0.5) {
  rnnsm::net::Network n(shape, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : n.parameters()) p = uniform(rng, -scale, scale);
  return n;
}

inline rnnsm::features::UserSequence random_sequence(const rnnsm::net::NetworkShape& shape, int steps,
                                                     std::mt19937_64& rng, bool censored = false) {
  rnnsm::features::UserSequence s;
  s.user_id = "u";
  s.is_censored = censored;
  for (int t = 0; t < steps; ++t) {
    rnnsm::features::SequenceStep step;
    for (int card : shape.cardinalities) step.discrete.push_back(uniform_int(rng, 0, card));
    for (int c = 0; c < shape.continuous_width; ++c) step.continuous.push_back(uniform(rng, -1.5, 1.5));
    s.steps.push_back(step);
    s.targets.push_back(uniform(rng, 0.2, 6.0));
  }
  s.active_day_count = steps;
  s.horizon_gap = s.targets.back() + 1.0;
  return s;
}

/// Prediction record built directly from observed/censored values.
inline rnnsm::eval::PredictionRecord record(const std::string& id, double predicted, double observed, bool censored,
                                            double horizon_gap = 0.0, int active_days = 1) {
  rnnsm::eval::PredictionRecord r;
  r.user_id = id;
  r.predicted_return_days = predicted;
  if (censored)
    r.censored_lower_bound_days = observed;
  else
    r.true_return_days = observed;
  r.horizon_gap_days = censored ? observed : horizon_gap;
  r.active_day_count = active_days;
  return r;
}

/// Dataset of users each with a regular session pattern; returning users come
/// back inside the prediction window. Window (30, 100, 160).
inline rnnsm::data::Dataset toy_dataset(int returning, int censored, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::vector<rnnsm::data::Session> raw;
  const rnnsm::data::WindowConfig w{30.0, 100.0, 160.0};
  auto add_user = [&](const std::string& id, bool returns) {
    double t = uniform(rng, 0.0, 20.0);
    const double gap = uniform(rng, 2.0, 15.0);
    while (t < 99.0) {
      raw.push_back(session(id, t, 0.01));
      t += gap * uniform(rng, 0.5, 1.5);
    }
    if (returns) raw.push_back(session(id, uniform(rng, 100.5, 159.0)));
  };
  for (int i = 0; i < returning; ++i) add_user("r" + std::to_string(i), true);
  for (int i = 0; i < censored; ++i) add_user("c" + std::to_string(i), false);
  rnnsm::data::MarkerSchema empty;
  return rnnsm::data::assign_windows(raw, w, empty);
}

}  // namespace testing
