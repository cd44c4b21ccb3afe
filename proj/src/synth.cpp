#include "rnnsm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "rnnsm/errors.hpp"
#include "rnnsm/io.hpp"

namespace rnnsm::synth {

namespace {

constexpr int kMaxSessionsPerUser = 200000;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

// Replaces the time of day of `candidate` by an hour from the mixture; the
// result stays strictly after `not_before`.
double snap_to_hour(std::mt19937_64& rng, const GeneratorConfig& c, double candidate, double not_before) {
  const bool night = uniform(rng, 0.0, 1.0) < c.night_weight;
  double hour = std::normal_distribution<double>(night ? c.night_hour_mean : c.day_hour_mean, c.hour_sd)(rng);
  hour = std::fmod(std::fmod(hour, 24.0) + 24.0, 24.0);
  double t = std::floor(candidate) + hour / 24.0;
  while (t <= not_before) t += 1.0;
  return t;
}

struct UserDraw {
  std::vector<data::Session> sessions;
  GroundTruth truth;
};

UserDraw generate_user(const GeneratorConfig& c, std::size_t index, const data::MarkerSchema& schema,
                       std::int64_t epoch) {
  std::mt19937_64 rng(user_seed(c.seed, index));
  UserDraw out;
  char id[32];
  std::snprintf(id, sizeof id, "u%06zu", index);
  out.truth.user_id = id;

  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  const Cohort* cohort = &c.cohorts.back();
  for (const auto& k : c.cohorts) {
    acc += k.fraction;
    if (u < acc) {
      cohort = &k;
      break;
    }
  }
  out.truth.cohort = cohort->name;

  const double mu = cohort->mu + (c.user_mu_sd > 0.0 ? std::normal_distribution<double>(0.0, c.user_mu_sd)(rng) : 0.0);
  const double join = c.join_end > c.join_start ? uniform(rng, c.join_start, c.join_end) : c.join_start;
  const bool lapses = cohort->lapse_multiplier != 1.0;
  const double change_point =
      lapses ? (cohort->change_point_max > cohort->change_point_min
                    ? uniform(rng, cohort->change_point_min, cohort->change_point_max)
                    : cohort->change_point_min)
             : INFINITY;
  std::discrete_distribution<int> device(c.device_probabilities.begin(), c.device_probabilities.end());

  const double t_p = c.window.prediction_start;
  double start = c.snap_to_hours ? snap_to_hour(rng, c, join, -1.0) : join;
  double last_end_before_tp = -1.0;
  bool recorded = false;
  for (int n = 0; n < kMaxSessionsPerUser; ++n) {
    if (start > t_p && !recorded) {
      recorded = true;
      if (last_end_before_tp >= 0.0) {
        out.truth.true_return_days = start - last_end_before_tp;
        out.truth.observed_before_prediction = true;
        out.truth.returns_within_horizon = start <= c.window.horizon_end;
      } else {
        out.truth.true_return_days = -1.0;
      }
    }
    if (start > c.horizon_days) break;

    const double duration = sample_gap(rng, c.duration_mu, c.duration_sigma);
    const double end = start + duration;
    data::Session s;
    s.user_id = out.truth.user_id;
    s.start_time = start;
    s.duration = duration;
    s.discrete_markers["device"] = device(rng);
    s.continuous_markers["pages_viewed"] = std::max(1.0, std::round(sample_gap(rng, c.pages_mu, c.pages_sigma)));
    data::fill_calendar_markers(s, epoch, schema);
    out.sessions.push_back(std::move(s));
    if (start <= t_p) last_end_before_tp = std::min(end, t_p);

    double gap = sample_gap(rng, mu, cohort->sigma);
    if (end >= change_point) {
      const double ramp = cohort->lapse_ramp_days > 0.0 ? std::min(1.0, (end - change_point) / cohort->lapse_ramp_days) : 1.0;
      gap *= std::pow(cohort->lapse_multiplier, ramp);
    }
    const double candidate = end + gap;
    start = c.snap_to_hours ? snap_to_hour(rng, c, candidate, end) : candidate;
  }
  if (!recorded) out.truth.true_return_days = -1.0;
  return out;
}

}  // namespace

double sample_gap(std::mt19937_64& rng, double mu, double sigma) {
  if (sigma == 0.0) return std::exp(mu);
  return std::exp(mu + sigma * std::normal_distribution<double>(0.0, 1.0)(rng));
}

std::uint64_t user_seed(std::uint64_t seed, std::uint64_t user_index) {
  return splitmix64(splitmix64(seed) ^ (user_index * 0xD1B54A32D192ED03ULL + 1));
}

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  c.cohorts = {
      {"heavy", 0.12, std::log(1.5), 0.8, 1.0, 0.0, 0.0, 0.0},
      {"regular", 0.18, std::log(6.0), 0.8, 1.0, 0.0, 0.0, 0.0},
      {"lapsing", 0.7, std::log(4.0), 0.8, 200.0, 350.0, 432.0, 20.0},
  };
  return c;
}

void GeneratorConfig::validate() const {
  if (user_count < 1) throw ConfigError("generator: user_count must be >= 1");
  if (!(horizon_days > 0.0)) throw ConfigError("generator: horizon_days must be > 0");
  try {
    window.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("generator window: ") + e.what());
  }
  if (window.horizon_end > horizon_days) throw ConfigError("generator: window horizon_end exceeds horizon_days");
  if (join_end < join_start) throw ConfigError("generator: join_end < join_start");
  if (cohorts.empty()) throw ConfigError("generator: at least one cohort is required");
  double total = 0.0;
  for (const auto& k : cohorts) {
    if (k.fraction < 0.0) throw ConfigError("generator: cohort '" + k.name + "' has a negative fraction");
    if (k.sigma < 0.0) throw ConfigError("generator: cohort '" + k.name + "' has sigma < 0");
    if (!(k.lapse_multiplier > 0.0)) throw ConfigError("generator: lapse_multiplier must be > 0");
    if (k.change_point_max < k.change_point_min || k.lapse_ramp_days < 0.0) {
      throw ConfigError("generator: cohort '" + k.name + "' has an invalid change-point range or ramp");
    }
    total += k.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("generator: cohort fractions sum to " + std::to_string(total) + ", expected 1");
  }
  if (device_probabilities.size() != 4) throw ConfigError("generator: need 4 device probabilities");
  for (double p : device_probabilities)
    if (p < 0.0) throw ConfigError("generator: negative device probability");
  if (night_weight < 0.0 || night_weight > 1.0) throw ConfigError("generator: night_weight must lie in [0, 1]");
  if (user_mu_sd < 0.0 || hour_sd < 0.0 || duration_sigma < 0.0 || pages_sigma < 0.0) {
    throw ConfigError("generator: standard deviations must be >= 0");
  }
}

void to_json(nlohmann::json& j, const Cohort& c) {
  j = {{"name", c.name},
       {"fraction", c.fraction},
       {"mu", c.mu},
       {"sigma", c.sigma},
       {"lapse_multiplier", c.lapse_multiplier},
       {"change_point_min", c.change_point_min},
       {"change_point_max", c.change_point_max},
       {"lapse_ramp_days", c.lapse_ramp_days}};
}

void from_json(const nlohmann::json& j, Cohort& c) {
  c.name = j.at("name").get<std::string>();
  c.fraction = j.at("fraction").get<double>();
  c.mu = j.at("mu").get<double>();
  c.sigma = j.at("sigma").get<double>();
  c.lapse_multiplier = j.value("lapse_multiplier", 1.0);
  c.change_point_min = j.value("change_point_min", 0.0);
  c.change_point_max = j.value("change_point_max", 0.0);
  c.lapse_ramp_days = j.value("lapse_ramp_days", 0.0);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"user_count", c.user_count},
       {"horizon_days", c.horizon_days},
       {"window", c.window},
       {"join_start", c.join_start},
       {"join_end", c.join_end},
       {"user_mu_sd", c.user_mu_sd},
       {"cohorts", c.cohorts},
       {"device_probabilities", c.device_probabilities},
       {"night_weight", c.night_weight},
       {"night_hour_mean", c.night_hour_mean},
       {"day_hour_mean", c.day_hour_mean},
       {"hour_sd", c.hour_sd},
       {"snap_to_hours", c.snap_to_hours},
       {"duration_mu", c.duration_mu},
       {"duration_sigma", c.duration_sigma},
       {"pages_mu", c.pages_mu},
       {"pages_sigma", c.pages_sigma},
       {"seed", c.seed},
       {"epoch_date", c.epoch_date}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  const auto d = GeneratorConfig::defaults();
  try {
    c.user_count = j.value("user_count", d.user_count);
    c.horizon_days = j.value("horizon_days", d.horizon_days);
    c.window = j.contains("window") ? j.at("window").get<data::WindowConfig>() : d.window;
    c.join_start = j.value("join_start", d.join_start);
    c.join_end = j.value("join_end", d.join_end);
    c.user_mu_sd = j.value("user_mu_sd", d.user_mu_sd);
    c.cohorts = j.contains("cohorts") ? j.at("cohorts").get<std::vector<Cohort>>() : d.cohorts;
    c.device_probabilities = j.value("device_probabilities", d.device_probabilities);
    c.night_weight = j.value("night_weight", d.night_weight);
    c.night_hour_mean = j.value("night_hour_mean", d.night_hour_mean);
    c.day_hour_mean = j.value("day_hour_mean", d.day_hour_mean);
    c.hour_sd = j.value("hour_sd", d.hour_sd);
    c.snap_to_hours = j.value("snap_to_hours", d.snap_to_hours);
    c.duration_mu = j.value("duration_mu", d.duration_mu);
    c.duration_sigma = j.value("duration_sigma", d.duration_sigma);
    c.pages_mu = j.value("pages_mu", d.pages_mu);
    c.pages_sigma = j.value("pages_sigma", d.pages_sigma);
    c.seed = j.value("seed", d.seed);
    c.epoch_date = j.value("epoch_date", d.epoch_date);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
}

Generated generate(const GeneratorConfig& config) {
  config.validate();
  Generated g;
  g.schema = data::MarkerSchema::defaults();
  g.window = config.window;
  try {
    g.epoch_seconds = io::floor_to_day(io::parse_iso8601(config.epoch_date));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("generator epoch_date: ") + e.what());
  }

  std::size_t empty_users = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(config.user_count); ++i) {
    auto draw = generate_user(config, i, g.schema, g.epoch_seconds);
    if (draw.sessions.empty()) ++empty_users;
    g.sessions.insert(g.sessions.end(), std::make_move_iterator(draw.sessions.begin()),
                      std::make_move_iterator(draw.sessions.end()));
    g.truth.push_back(std::move(draw.truth));
  }
  if (2 * empty_users > static_cast<std::size_t>(config.user_count)) {
    throw ConfigError("generator: " + std::to_string(empty_users) + " of " + std::to_string(config.user_count) +
                      " users have no session in [0, horizon]; move join_start/join_end inside the horizon");
  }
  return g;
}

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruth>& truth) {
  out << "user_id,cohort,true_return_days_or_censored\n";
  char buf[64];
  for (const auto& t : truth) {
    out << t.user_id << ',' << t.cohort << ',';
    if (!t.observed_before_prediction) {
      out << "unobserved";
    } else if (!t.returns_within_horizon) {
      out << "censored";
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", t.true_return_days);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace rnnsm::synth
