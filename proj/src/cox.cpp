#include "rnnsm/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnnsm/errors.hpp"

namespace rnnsm::cox {

namespace {

constexpr double kTieResolution = 1e-9;
const double kUnderflowLog = -std::log(1e-300);

std::int64_t tie_key(double t) { return std::llround(t / kTieResolution); }

// Indices sorted by descending tie key, grouped into blocks of equal time.
std::vector<std::vector<std::size_t>> time_blocks_descending(std::span<const double> times) {
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return tie_key(times[a]) > tie_key(times[b]); });
  std::vector<std::vector<std::size_t>> blocks;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k == 0 || tie_key(times[order[k]]) != tie_key(times[order[k - 1]])) blocks.emplace_back();
    blocks.back().push_back(order[k]);
  }
  return blocks;
}

void check_inputs(const Eigen::MatrixXd& x, std::span<const double> times, std::span<const std::uint8_t> events) {
  if (static_cast<std::size_t>(x.rows()) != times.size() || times.size() != events.size()) {
    throw ValidationError("cox: covariate rows, times and event flags differ in length");
  }
  for (double t : times)
    if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("cox: survival times must be finite and > 0");
  if (std::none_of(events.begin(), events.end(), [](auto e) { return e != 0; })) {
    throw ValidationError("cox: no events (all observations censored)");
  }
}

// Integral of exp(-m (H(t) - offset)) over [a, b] where H is linear on the piece.
double piece_integral(double a, double b, double h_a, double h_b, double m, double offset) {
  const double width = b - a;
  if (width <= 0.0) return 0.0;
  const double start = std::exp(-m * (h_a - offset));
  const double k = m * (h_b - h_a) / width;
  if (k <= 0.0) return start * width;
  return start * (-std::expm1(-k * width)) / k;
}

}  // namespace

void to_json(nlohmann::json& j, const CoxFitOptions& o) {
  j = {{"max_iterations", o.max_iterations},
       {"gradient_tolerance", o.gradient_tolerance},
       {"ridge", o.ridge},
       {"condition_limit", o.condition_limit},
       {"tail_window", o.tail_window}};
}

void from_json(const nlohmann::json& j, CoxFitOptions& o) {
  CoxFitOptions d;
  o.max_iterations = j.value("max_iterations", d.max_iterations);
  o.gradient_tolerance = j.value("gradient_tolerance", d.gradient_tolerance);
  o.ridge = j.value("ridge", d.ridge);
  o.condition_limit = j.value("condition_limit", d.condition_limit);
  o.tail_window = j.value("tail_window", d.tail_window);
  if (o.max_iterations < 1 || !(o.gradient_tolerance > 0.0) || o.ridge < 0.0 || o.tail_window < 1) {
    throw ConfigError("cox options out of range");
  }
}

PartialLikelihood efron_partial_log_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                               std::span<const double> times,
                                               std::span<const std::uint8_t> events) {
  check_inputs(x, times, events);
  const Eigen::Index p = x.cols();
  if (beta.size() != p) throw ValidationError("cox: beta has the wrong length");

  const Eigen::VectorXd eta = x * beta;
  const double shift = eta.maxCoeff();
  const Eigen::VectorXd risk = (eta.array() - shift).exp();

  PartialLikelihood out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.hessian = Eigen::MatrixXd::Zero(p, p);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  for (const auto& block : time_blocks_descending(times)) {
    double t0 = 0.0;
    Eigen::VectorXd t1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(p, p);
    int d = 0;
    for (std::size_t i : block) {
      const auto xi = x.row(static_cast<Eigen::Index>(i)).transpose();
      const double r = risk(static_cast<Eigen::Index>(i));
      s0 += r;
      s1 += r * xi;
      s2.noalias() += r * xi * xi.transpose();
      if (events[i]) {
        ++d;
        t0 += r;
        t1 += r * xi;
        t2.noalias() += r * xi * xi.transpose();
        out.value += eta(static_cast<Eigen::Index>(i));
        out.gradient += xi;
      }
    }
    for (int l = 0; l < d; ++l) {
      const double frac = static_cast<double>(l) / static_cast<double>(d);
      const double denom = s0 - frac * t0;
      const Eigen::VectorXd mean = (s1 - frac * t1) / denom;
      out.value -= std::log(denom) + shift;
      out.gradient -= mean;
      out.hessian -= (s2 - frac * t2) / denom - mean * mean.transpose();
    }
  }
  return out;
}

BaselineHazard BaselineHazard::from_rates(const std::vector<double>& breaks, const std::vector<double>& rates) {
  if (rates.size() != breaks.size() + 1) throw ValidationError("from_rates: need one more rate than breaks");
  BaselineHazard b;
  double prev = 0.0, h = 0.0;
  for (std::size_t k = 0; k < breaks.size(); ++k) {
    if (!(breaks[k] > prev)) throw ValidationError("from_rates: breaks must be increasing and > 0");
    h += rates[k] * (breaks[k] - prev);
    b.times.push_back(breaks[k]);
    b.cumulative.push_back(h);
    prev = breaks[k];
  }
  b.tail_rate = rates.back();
  return b;
}

double BaselineHazard::cumulative_at(double t) const {
  if (t <= 0.0) return 0.0;
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) {
    const double t_last = times.empty() ? 0.0 : times.back();
    const double h_last = cumulative.empty() ? 0.0 : cumulative.back();
    return h_last + tail_rate * (t - t_last);
  }
  const auto k = static_cast<std::size_t>(it - times.begin());
  if (*it == t) return cumulative[k];
  const double t0 = k == 0 ? 0.0 : times[k - 1];
  const double h0 = k == 0 ? 0.0 : cumulative[k - 1];
  return h0 + (cumulative[k] - h0) * (t - t0) / (times[k] - t0);
}

double BaselineHazard::survival_at(double t, double risk_multiplier) const {
  return std::exp(-risk_multiplier * cumulative_at(t));
}

double CoxModel::risk_score(std::span<const double> raw_features) const {
  if (raw_features.size() != static_cast<std::size_t>(beta.size())) {
    throw SchemaError("cox: feature vector has the wrong length");
  }
  double s = 0.0;
  for (std::size_t c = 0; c < raw_features.size(); ++c) {
    s += beta(static_cast<Eigen::Index>(c)) * standardizer.apply(c, raw_features[c]);
  }
  return s;
}

BaselineHazard cox_oakes_baseline(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                  std::span<const double> times, std::span<const std::uint8_t> events,
                                  int tail_window) {
  check_inputs(x, times, events);
  const Eigen::VectorXd eta = x * beta;
  const double shift = eta.maxCoeff();
  const Eigen::VectorXd risk = (eta.array() - shift).exp();

  std::vector<std::pair<double, double>> jumps;  // (time, increment), descending
  double s0 = 0.0;
  for (const auto& block : time_blocks_descending(times)) {
    int d = 0;
    for (std::size_t i : block) {
      s0 += risk(static_cast<Eigen::Index>(i));
      d += events[i] ? 1 : 0;
    }
    if (d > 0) jumps.emplace_back(times[block.front()], static_cast<double>(d) / s0 * std::exp(-shift));
  }
  std::reverse(jumps.begin(), jumps.end());

  BaselineHazard b;
  double h = 0.0;
  for (const auto& [t, inc] : jumps) {
    h += inc;
    b.times.push_back(t);
    b.cumulative.push_back(h);
  }
  const auto K = b.times.size();
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(tail_window, 1)), K);
  const double t_from = K > k ? b.times[K - k - 1] : 0.0;
  const double h_from = K > k ? b.cumulative[K - k - 1] : 0.0;
  b.tail_rate = (b.cumulative.back() - h_from) / (b.times.back() - t_from);
  return b;
}

CoxModel fit(const Eigen::MatrixXd& x, std::span<const double> times, std::span<const std::uint8_t> events,
             const CoxFitOptions& options) {
  check_inputs(x, times, events);
  if (std::count_if(events.begin(), events.end(), [](auto e) { return e != 0; }) < 2) {
    throw ValidationError("cox: at least two events are required");
  }
  const Eigen::Index p = x.cols();
  CoxModel model;
  model.beta = Eigen::VectorXd::Zero(p);
  auto current = efron_partial_log_likelihood(model.beta, x, times, events);

  int iter = 0;
  bool stalled_at_optimum = false;
  for (; iter < options.max_iterations; ++iter) {
    if (current.gradient.size() == 0 || current.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance) break;
    Eigen::MatrixXd info = -current.hessian;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > options.condition_limit) {
      info.diagonal().array() += options.ridge;
      model.ridge_used = true;
    }
    const Eigen::VectorXd step = info.ldlt().solve(current.gradient);
    const double decrement = current.gradient.dot(step);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      const Eigen::VectorXd candidate = model.beta + scale * step;
      auto next = efron_partial_log_likelihood(candidate, x, times, events);
      // Rounding in the log-likelihood sum dominates near the optimum; accept
      // a step that does not decrease it beyond that noise.
      if (std::isfinite(next.value) && next.value >= current.value - 1e-12 * std::abs(current.value)) {
        model.beta = candidate;
        current = std::move(next);
        improved = true;
        break;
      }
    }
    if (!improved) {
      stalled_at_optimum = decrement <= 1e-12 * std::max(1.0, std::abs(current.value));
      break;
    }
  }
  model.iterations = iter;
  model.final_gradient_norm = current.gradient.size() ? current.gradient.cwiseAbs().maxCoeff() : 0.0;
  if (model.final_gradient_norm >= options.gradient_tolerance && !stalled_at_optimum) {
    throw NumericalError("cox: Newton-Raphson did not converge after " + std::to_string(iter) +
                         " iterations (gradient max-norm " + std::to_string(model.final_gradient_norm) + ")");
  }
  model.baseline = cox_oakes_baseline(model.beta, x, times, events, options.tail_window);
  return model;
}

SurvivalTime expected_survival_time(const BaselineHazard& baseline, double risk_score,
                                    bool condition_on_absence, double t_s) {
  const double m = std::exp(risk_score);
  if (!std::isfinite(m)) return {0.0, condition_on_absence};
  const double start = condition_on_absence ? std::max(t_s, 0.0) : 0.0;
  const double offset = baseline.cumulative_at(start);

  double total = 0.0;
  double a = 0.0, h_a = 0.0;
  for (std::size_t k = 0; k < baseline.times.size(); ++k) {
    const double b = baseline.times[k], h_b = baseline.cumulative[k];
    if (b > start) {
      const double lo = std::max(a, start);
      total += piece_integral(lo, b, baseline.cumulative_at(lo), h_b, m, offset);
    }
    a = b;
    h_a = h_b;
  }
  const double tail_from = std::max(a, start);
  const double h_tail = baseline.cumulative_at(tail_from);
  double rate = baseline.tail_rate;
  if (!(rate > 0.0)) rate = a > 0.0 ? h_a / a : 0.0;
  if (!(rate > 0.0)) throw NumericalError("cox: baseline hazard is identically zero");
  total += std::exp(-m * (h_tail - offset)) / (m * rate);

  SurvivalTime r;
  r.value = start + total;
  r.survival_underflow = condition_on_absence && m * offset > kUnderflowLog;
  return r;
}

std::vector<std::vector<double>> model_covariates(const features::AggregateFeatures& agg, bool log_transform) {
  auto rows = agg.rows;
  if (!log_transform) return rows;
  for (auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c)
      if (agg.names[c] != "gap_missing") row[c] = std::log1p(std::max(0.0, row[c]));
  return rows;
}

CoxModel fit_dataset(const data::Dataset& train_set, const CoxFitOptions& options, bool log_transform) {
  const auto agg = features::build_aggregates(train_set);
  const auto rows = model_covariates(agg, log_transform);
  const auto stats = features::NormStats::fit(agg.names, rows);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(agg.names.size()));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      x(r, c) = stats.apply(static_cast<std::size_t>(c), rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
  std::vector<double> times;
  std::vector<std::uint8_t> events;
  for (const auto& u : train_set.users) {
    times.push_back(u.final_gap);
    events.push_back(u.is_censored ? 0 : 1);
  }
  auto model = fit(x, times, events, options);
  model.feature_names = agg.names;
  model.log_transform = log_transform;
  model.standardizer = stats;
  return model;
}

std::vector<eval::PredictionRecord> predict(const CoxModel& model, const data::Dataset& dataset,
                                            bool condition_on_absence) {
  const auto agg = features::build_aggregates(dataset);
  if (agg.names != model.feature_names) throw SchemaError("cox: dataset features differ from the model's");
  const auto rows = model_covariates(agg, model.log_transform);
  std::vector<eval::PredictionRecord> out;
  out.reserve(dataset.users.size());
  for (std::size_t i = 0; i < dataset.users.size(); ++i) {
    const auto& u = dataset.users[i];
    const double risk = model.risk_score(rows[i]);
    const double t_s = std::max(0.0, dataset.window.prediction_start - u.last_session_end);
    const auto e = expected_survival_time(model.baseline, risk, condition_on_absence, t_s);
    auto r = eval::make_record(u, dataset.window, e.value);
    const double m = std::exp(risk);
    const double h_gap = model.baseline.cumulative_at(r.horizon_gap_days);
    const double h_s = condition_on_absence ? model.baseline.cumulative_at(t_s) : 0.0;
    r.nonreturn_probability = std::exp(-m * (h_gap - h_s));
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json save_model(const CoxModel& model) {
  return {{"kind", "cox"},
          {"feature_names", model.feature_names},
          {"log_transform", model.log_transform},
          {"beta", std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size())},
          {"standardizer", model.standardizer},
          {"baseline",
           {{"times", model.baseline.times},
            {"cumulative", model.baseline.cumulative},
            {"tail_rate", model.baseline.tail_rate}}},
          {"iterations", model.iterations},
          {"final_gradient_norm", model.final_gradient_norm},
          {"ridge_used", model.ridge_used}};
}

CoxModel load_model(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "cox") throw SchemaError("not a cox model artifact");
    CoxModel m;
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto beta = j.at("beta").get<std::vector<double>>();
    m.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    m.log_transform = j.value("log_transform", true);
    m.standardizer = j.at("standardizer").get<features::NormStats>();
    const auto& b = j.at("baseline");
    m.baseline.times = b.at("times").get<std::vector<double>>();
    m.baseline.cumulative = b.at("cumulative").get<std::vector<double>>();
    m.baseline.tail_rate = b.at("tail_rate").get<double>();
    m.iterations = j.value("iterations", 0);
    m.final_gradient_norm = j.value("final_gradient_norm", 0.0);
    m.ridge_used = j.value("ridge_used", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed cox model: ") + e.what());
  }
}

}  // namespace rnnsm::cox
