#include "rnnsm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rnnsm/errors.hpp"
#include "rnnsm/io.hpp"
#include "rnnsm/kernels.hpp"

namespace rnnsm::eval {

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double score_of(const PredictionRecord& r, AucScore score) {
  switch (score) {
    case AucScore::ShiftedPrediction:
      return r.predicted_return_days - r.horizon_gap_days;
    case AucScore::RawPrediction:
      return r.predicted_return_days;
    case AucScore::NonReturnProbability:
      if (!r.nonreturn_probability) {
        throw ValidationError("record '" + r.user_id + "' carries no non-return probability");
      }
      return *r.nonreturn_probability;
  }
  return 0.0;
}

std::vector<BucketRow> bucketize(std::span<const PredictionRecord> records, auto key) {
  std::map<int, BucketRow> rows;
  for (const auto& r : records) {
    if (r.is_censored()) continue;
    const int k = key(r);
    auto& row = rows[k];
    row.bucket = k;
    const double err = r.predicted_return_days - *r.true_return_days;
    row.count += 1;
    row.mean_error += err;
    row.squared_error_sum += err * err;
  }
  std::vector<BucketRow> out;
  for (auto& [k, row] : rows) {
    const double n = static_cast<double>(row.count);
    row.mean_error /= n;
    row.rmse = std::sqrt(row.squared_error_sum / n);
    out.push_back(row);
  }
  return out;
}

nlohmann::json rows_json(const std::vector<BucketRow>& rows) {
  auto a = nlohmann::json::array();
  for (const auto& r : rows) {
    a.push_back({{"bucket", r.bucket}, {"count", r.count}, {"rmse", r.rmse}, {"mean_error", r.mean_error}});
  }
  return a;
}

}  // namespace

std::optional<int> PredictionRecord::true_return_week() const {
  if (!true_return_days) return std::nullopt;
  return static_cast<int>(std::floor(*true_return_days / 7.0));
}

double PredictionRecord::observed_days() const {
  return true_return_days ? *true_return_days : *censored_lower_bound_days;
}

PredictionRecord make_record(const data::UserHistory& user, const data::WindowConfig& window,
                             double predicted_return_days) {
  PredictionRecord r;
  r.user_id = user.user_id;
  r.predicted_return_days = predicted_return_days;
  r.horizon_gap_days = window.horizon_end - user.last_session_end;
  r.last_session_end = user.last_session_end;
  r.active_day_count = user.active_day_count();
  if (user.is_censored) {
    r.censored_lower_bound_days = user.final_gap;
  } else {
    r.true_return_days = user.final_gap;
  }
  return r;
}

double rmse_returning(std::span<const PredictionRecord> records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.is_censored()) continue;
    const double e = r.predicted_return_days - *r.true_return_days;
    sum += e * e;
    ++n;
  }
  if (n == 0) throw ValidationError("rmse_returning: no returning users");
  return std::sqrt(sum / static_cast<double>(n));
}

double concordance_index(std::span<const PredictionRecord> records) {
  std::vector<double> time, predicted;
  std::vector<std::uint8_t> event;
  for (const auto& r : records) {
    time.push_back(r.observed_days());
    event.push_back(r.is_censored() ? 0 : 1);
    predicted.push_back(r.predicted_return_days);
  }
  const auto c = kernels::concordance_pairs_parallel(time, event, predicted);
  if (c.comparable == 0) throw ValidationError("concordance_index: no comparable pairs");
  return static_cast<double>(c.concordant_x2) / (2.0 * static_cast<double>(c.comparable));
}

double nonreturning_auc(std::span<const PredictionRecord> records, AucScore score) {
  const std::size_t n = records.size();
  std::vector<double> s(n);
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = score_of(records[i], score);
    if (records[i].is_censored()) ++n_pos;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("nonreturning_auc: both classes are required");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  // Twice the average rank of each tie block keeps the rank sum integral.
  std::int64_t rank_sum_x2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s[order[j]] == s[order[i]]) ++j;
    const auto avg_rank_x2 = static_cast<std::int64_t>(i + 1 + j);  // 2 * (i+1 + j) / 2
    for (std::size_t k = i; k < j; ++k)
      if (records[order[k]].is_censored()) rank_sum_x2 += avg_rank_x2;
    i = j;
  }
  const auto p = static_cast<std::int64_t>(n_pos);
  const std::int64_t u_x2 = rank_sum_x2 - p * (p + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double nonreturning_recall(std::span<const PredictionRecord> records) {
  std::size_t censored = 0, hit = 0;
  for (const auto& r : records) {
    if (!r.is_censored()) continue;
    ++censored;
    if (r.predicted_return_days > r.horizon_gap_days) ++hit;
  }
  if (censored == 0) throw ValidationError("nonreturning_recall: no censored users");
  return static_cast<double>(hit) / static_cast<double>(censored);
}

ErrorBreakdowns error_breakdowns(std::span<const PredictionRecord> records) {
  ErrorBreakdowns b;
  b.by_week = bucketize(records, [](const PredictionRecord& r) { return *r.true_return_week(); });
  b.by_active_days = bucketize(
      records, [](const PredictionRecord& r) { return std::min(r.active_day_count, kActiveDayCap); });
  return b;
}

double rmse_for_active_days(std::span<const PredictionRecord> records, int lo, int hi) {
  std::vector<PredictionRecord> subset;
  for (const auto& r : records)
    if (r.active_day_count >= lo && r.active_day_count <= hi) subset.push_back(r);
  return rmse_returning(subset);
}

ModelMetrics evaluate_model(std::span<const PredictionRecord> records) {
  ModelMetrics m;
  m.users = records.size();
  m.returning = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.is_censored(); }));
  m.rmse_days = rmse_returning(records);
  m.concordance = concordance_index(records);
  m.nonreturning_auc = nonreturning_auc(records, AucScore::ShiftedPrediction);
  m.nonreturning_auc_raw = nonreturning_auc(records, AucScore::RawPrediction);
  const bool has_prob = std::all_of(records.begin(), records.end(),
                                    [](const auto& r) { return r.nonreturn_probability.has_value(); });
  if (has_prob) m.nonreturning_auc_probability = nonreturning_auc(records, AucScore::NonReturnProbability);
  m.nonreturning_recall = nonreturning_recall(records);
  m.breakdowns = error_breakdowns(records);
  return m;
}

EvaluationReport evaluate(const std::map<std::string, std::vector<PredictionRecord>>& predictions) {
  EvaluationReport report;
  for (const auto& [name, records] : predictions) report.models[name] = evaluate_model(records);
  return report;
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json j;
  auto& models_json = j["models"] = nlohmann::json::object();
  for (const auto& [name, m] : models) {
    nlohmann::json mj = {{"users", m.users},
                         {"returning", m.returning},
                         {"rmse_days", m.rmse_days},
                         {"concordance", m.concordance},
                         {"nonreturning_auc", m.nonreturning_auc},
                         {"nonreturning_auc_raw_prediction", m.nonreturning_auc_raw},
                         {"nonreturning_recall", m.nonreturning_recall},
                         {"rmse_by_week", rows_json(m.breakdowns.by_week)},
                         {"rmse_by_active_days", rows_json(m.breakdowns.by_active_days)}};
    mj["nonreturning_auc_probability"] =
        m.nonreturning_auc_probability ? nlohmann::json(*m.nonreturning_auc_probability) : nlohmann::json();
    models_json[name] = std::move(mj);
  }
  return j;
}

void EvaluationReport::write_week_csv(std::ostream& out) const {
  out << "model,week,count,rmse,mean_error\n";
  for (const auto& [name, m] : models)
    for (const auto& r : m.breakdowns.by_week)
      out << name << ',' << r.bucket << ',' << r.count << ',' << fmt(r.rmse) << ',' << fmt(r.mean_error) << '\n';
}

void EvaluationReport::write_active_days_csv(std::ostream& out) const {
  out << "model,active_days,count,rmse\n";
  for (const auto& [name, m] : models) {
    for (const auto& r : m.breakdowns.by_active_days) {
      out << name << ',' << (r.bucket >= kActiveDayCap ? std::string("64+") : std::to_string(r.bucket))
          << ',' << r.count << ',' << fmt(r.rmse) << '\n';
    }
  }
}

std::string EvaluationReport::table() const {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-22s", "");
  os << buf;
  for (const auto& [name, m] : models) {
    std::snprintf(buf, sizeof buf, "%10s", name.c_str());
    os << buf;
  }
  os << '\n';
  auto row = [&](const char* label, auto get, const char* f) {
    std::snprintf(buf, sizeof buf, "%-22s", label);
    os << buf;
    for (const auto& [name, m] : models) {
      std::snprintf(buf, sizeof buf, f, get(m));
      os << buf;
    }
    os << '\n';
  };
  row("RMSE (days)", [](const ModelMetrics& m) { return m.rmse_days; }, "%10.2f");
  row("Concordance", [](const ModelMetrics& m) { return m.concordance; }, "%10.3f");
  row("Non-returning AUC", [](const ModelMetrics& m) { return m.nonreturning_auc; }, "%10.3f");
  row("Non-returning recall", [](const ModelMetrics& m) { return m.nonreturning_recall; }, "%10.3f");
  return os.str();
}

void write_predictions_csv(std::ostream& out, std::span<const PredictionRecord> records,
                           std::int64_t epoch_seconds) {
  out << "user_id,predicted_return_days,predicted_return_date,is_censored_truth,true_return_days,"
         "horizon_gap_days,last_session_end,active_day_count,nonreturn_probability\n";
  for (const auto& r : records) {
    const double when = static_cast<double>(epoch_seconds) +
                        (r.last_session_end + r.predicted_return_days) * 86400.0;
    out << r.user_id << ',' << fmt(r.predicted_return_days) << ','
        << (std::isfinite(when) ? io::format_iso_date(when) : std::string()) << ','
        << (r.is_censored() ? 1 : 0) << ',' << (r.true_return_days ? fmt(*r.true_return_days) : "") << ','
        << fmt(r.horizon_gap_days) << ',' << fmt(r.last_session_end) << ',' << r.active_day_count << ','
        << (r.nonreturn_probability ? fmt(*r.nonreturn_probability) : "") << '\n';
  }
}

std::vector<PredictionRecord> read_predictions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty prediction file");
  const auto header = split_csv(line);
  if (header.size() < 8 || header[0] != "user_id" || header[1] != "predicted_return_days") {
    throw ValidationError("unexpected prediction CSV header");
  }
  std::vector<PredictionRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() < 8) throw ValidationError("prediction CSV line " + std::to_string(line_no) + " is short");
    try {
      PredictionRecord r;
      r.user_id = c[0];
      r.predicted_return_days = std::stod(c[1]);
      const bool censored = c[3] == "1";
      r.horizon_gap_days = std::stod(c[5]);
      r.last_session_end = std::stod(c[6]);
      r.active_day_count = std::stoi(c[7]);
      if (censored) {
        r.censored_lower_bound_days = r.horizon_gap_days;
      } else {
        r.true_return_days = std::stod(c[4]);
      }
      if (c.size() > 8 && !c[8].empty()) r.nonreturn_probability = std::stod(c[8]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ValidationError("prediction CSV line " + std::to_string(line_no) + " is malformed");
    }
  }
  return out;
}

}  // namespace rnnsm::eval
