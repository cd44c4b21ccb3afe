#include "rnnsm/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnnsm/errors.hpp"

namespace rnnsm::features {

namespace {

double compress(double x) { return std::copysign(std::log1p(std::abs(x)), x); }

struct StepGroup {
  double start = 0.0;
  double end = 0.0;
  int sessions = 0;
  double total_duration = 0.0;
  const data::Session* first = nullptr;
  std::vector<double> marker_sums;
};

std::vector<StepGroup> group_steps(const data::UserHistory& user, const data::MarkerSchema& schema,
                                   StepGranularity granularity) {
  std::vector<StepGroup> groups;
  long current_day = 0;
  for (const auto& s : user.sessions) {
    const long day = static_cast<long>(std::floor(s.start_time));
    const bool new_group = groups.empty() || granularity == StepGranularity::Session || day != current_day;
    if (new_group) {
      StepGroup g;
      g.start = s.start_time;
      g.first = &s;
      g.marker_sums.assign(schema.continuous.size(), 0.0);
      groups.push_back(std::move(g));
      current_day = day;
    }
    auto& g = groups.back();
    g.end = s.end_time();
    g.sessions += 1;
    g.total_duration += s.duration;
    for (std::size_t m = 0; m < schema.continuous.size(); ++m) {
      auto it = s.continuous_markers.find(schema.continuous[m]);
      if (it != s.continuous_markers.end()) g.marker_sums[m] += it->second;
    }
  }
  groups.back().end = user.last_session_end;
  return groups;
}

}  // namespace

NormStats NormStats::fit(const std::vector<std::string>& names,
                         const std::vector<std::vector<double>>& rows) {
  NormStats s;
  s.names = names;
  const std::size_t p = names.size();
  s.mean.assign(p, 0.0);
  s.sd.assign(p, 1.0);
  if (rows.empty()) return s;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t c = 0; c < p; ++c) s.mean[c] += r[c];
  for (auto& m : s.mean) m /= n;
  std::vector<double> var(p, 0.0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < p; ++c) var[c] += (r[c] - s.mean[c]) * (r[c] - s.mean[c]);
  for (std::size_t c = 0; c < p; ++c) {
    const double sd = std::sqrt(var[c] / n);
    s.sd[c] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

double NormStats::apply(std::size_t column, double value) const {
  return (value - mean[column]) / sd[column];
}

void NormStats::apply_in_place(std::vector<double>& row) const {
  if (row.size() != mean.size()) {
    throw SchemaError("normalization statistics expect " + std::to_string(mean.size()) +
                      " columns, got " + std::to_string(row.size()));
  }
  for (std::size_t c = 0; c < row.size(); ++c) row[c] = apply(c, row[c]);
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"names", s.names}, {"mean", s.mean}, {"sd", s.sd}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  s.names = j.at("names").get<std::vector<std::string>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.sd = j.at("sd").get<std::vector<double>>();
}

Eigen::MatrixXd AggregateFeatures::matrix() const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < names.size(); ++c)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return X;
}

AggregateFeatures build_aggregates(const data::Dataset& dataset) {
  AggregateFeatures out;
  out.names = {"session_count", "active_day_count", "mean_gap", "std_gap", "mean_duration"};
  for (const auto& m : dataset.schema.continuous) out.names.push_back("mean_" + m);
  out.names.insert(out.names.end(),
                   {"absence_time", "observation_span", "last_gap", "activity_window_sessions", "gap_missing"});

  for (const auto& u : dataset.users) {
    const auto& s = u.sessions;
    const double n = static_cast<double>(s.size());
    std::vector<double> row;
    row.reserve(out.names.size());
    row.push_back(n);
    row.push_back(u.active_day_count());

    const auto& gaps = u.return_targets;
    double mean_gap = 0.0, std_gap = 0.0;
    if (!gaps.empty()) {
      mean_gap = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
      double ss = 0.0;
      for (double g : gaps) ss += (g - mean_gap) * (g - mean_gap);
      std_gap = std::sqrt(ss / static_cast<double>(gaps.size()));
    }
    row.push_back(mean_gap);
    row.push_back(std_gap);

    double dur = 0.0;
    for (const auto& x : s) dur += x.duration;
    row.push_back(dur / n);

    for (const auto& m : dataset.schema.continuous) {
      double total = 0.0;
      for (const auto& x : s) {
        auto it = x.continuous_markers.find(m);
        if (it != x.continuous_markers.end()) total += it->second;
      }
      row.push_back(total / n);
    }
    row.push_back(std::max(0.0, dataset.window.prediction_start - u.last_session_end));
    row.push_back(s.back().start_time - s.front().start_time);
    row.push_back(gaps.empty() ? 0.0 : gaps.back());
    row.push_back(static_cast<double>(std::count_if(s.begin(), s.end(), [&](const data::Session& x) {
      return x.end_time() >= dataset.window.activity_start;
    })));
    row.push_back(gaps.empty() ? 1.0 : 0.0);

    out.user_ids.push_back(u.user_id);
    out.rows.push_back(std::move(row));
  }
  return out;
}

void to_json(nlohmann::json& j, const SequenceConfig& c) {
  j = {{"max_steps", c.max_steps},
       {"granularity", c.granularity == StepGranularity::ActiveDay ? "active_day" : "session"}};
}

void from_json(const nlohmann::json& j, SequenceConfig& c) {
  c.max_steps = j.value("max_steps", 64);
  const auto g = j.value("granularity", std::string("active_day"));
  if (g == "active_day") {
    c.granularity = StepGranularity::ActiveDay;
  } else if (g == "session") {
    c.granularity = StepGranularity::Session;
  } else {
    throw ConfigError("unknown step granularity '" + g + "'");
  }
}

std::vector<std::string> sequence_channel_names(const data::MarkerSchema& schema) {
  std::vector<std::string> names = {"elapsed_days", "sessions", "total_duration_days"};
  for (const auto& m : schema.continuous) names.push_back("sum_" + m);
  return names;
}

SequenceSet build_sequences(const data::Dataset& dataset, const SequenceConfig& config,
                            const std::optional<NormStats>& stats) {
  if (config.max_steps < 1) throw ConfigError("max_steps must be >= 1");
  const auto& schema = dataset.schema;
  const auto channels = sequence_channel_names(schema);

  SequenceSet out;
  out.sequences.reserve(dataset.users.size());
  for (const auto& u : dataset.users) {
    const auto groups = group_steps(u, schema, config.granularity);
    UserSequence seq;
    seq.user_id = u.user_id;
    seq.is_censored = u.is_censored;
    seq.last_session_end = u.last_session_end;
    seq.horizon_gap = dataset.window.horizon_end - u.last_session_end;
    seq.absence_time = std::max(0.0, dataset.window.prediction_start - u.last_session_end);
    seq.active_day_count = u.active_day_count();

    const std::size_t first =
        groups.size() > static_cast<std::size_t>(config.max_steps) ? groups.size() - config.max_steps : 0;
    for (std::size_t k = first; k < groups.size(); ++k) {
      const auto& g = groups[k];
      SequenceStep step;
      step.discrete.reserve(schema.discrete.size());
      for (const auto& d : schema.discrete) {
        auto it = g.first->discrete_markers.find(d.name);
        const bool known = it != g.first->discrete_markers.end() && it->second >= 0 &&
                           it->second < d.cardinality;
        step.discrete.push_back(known ? it->second : d.cardinality);
      }
      const double elapsed = k == 0 ? 0.0 : g.start - groups[k - 1].end;
      step.continuous = {compress(elapsed), compress(g.sessions), compress(g.total_duration)};
      for (double v : g.marker_sums) step.continuous.push_back(compress(v));
      seq.steps.push_back(std::move(step));
      seq.targets.push_back(k + 1 < groups.size() ? groups[k + 1].start - g.end : u.final_gap);
    }
    out.sequences.push_back(std::move(seq));
  }

  if (stats) {
    if (stats->names != channels) throw SchemaError("normalization statistics do not match the channels");
    out.stats = *stats;
  } else {
    std::vector<std::vector<double>> rows;
    for (const auto& s : out.sequences)
      for (const auto& st : s.steps) rows.push_back(st.continuous);
    out.stats = NormStats::fit(channels, rows);
  }
  for (auto& s : out.sequences)
    for (auto& st : s.steps) out.stats.apply_in_place(st.continuous);
  return out;
}

int select_embedding_dim(const Eigen::MatrixXd& embedding, double variance_threshold) {
  if (embedding.rows() == 0 || embedding.cols() == 0) return 1;
  const Eigen::MatrixXd centred = embedding.rowwise() - embedding.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred);
  const Eigen::VectorXd sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  const double tol = smax * 1e-10 * static_cast<double>(std::max(centred.rows(), centred.cols()));
  int rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > tol) ++rank;
  if (rank == 0) return 1;

  const Eigen::VectorXd var = sv.array().square();
  const double total = var.sum();
  double cumulative = 0.0;
  for (int k = 0; k < rank; ++k) {
    cumulative += var(k);
    if (cumulative / total > variance_threshold) return k + 1;
  }
  return rank;
}

std::vector<int> select_embedding_dims(const std::vector<Eigen::MatrixXd>& embeddings,
                                       double variance_threshold) {
  std::vector<int> dims;
  dims.reserve(embeddings.size());
  for (const auto& e : embeddings) dims.push_back(select_embedding_dim(e, variance_threshold));
  return dims;
}

}  // namespace rnnsm::features
