// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned here.

#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/expint.hpp>

#include "rnnsm/cox.hpp"
#include "rnnsm/evaluation.hpp"
#include "rnnsm/experiment.hpp"
#include "rnnsm/survival_model.hpp"
#include "rnnsm/survival_process.hpp"
#include "rnnsm/training.hpp"
#include "support.hpp"

using namespace rnnsm;
namespace bq = boost::math::quadrature;

namespace {

constexpr double kNormTol = 1e-6;
constexpr double kDensityTol = 1e-12;
constexpr double kSurvivalTol = 1e-8;
constexpr double kGradH = 1e-5;
constexpr double kGradRel = 1e-4;
constexpr double kExpectationTol = 1e-4;
constexpr double kEfronBreslowTol = 1e-12;
constexpr double kBetaTol = 0.1;
constexpr double kNelsonAalenTol = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double gk(const std::function<double(double)>& f, double a, double b) {
  return bq::gauss_kronrod<double, 61>::integrate(f, a, b, 25, 1e-14);
}

void normalization() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (auto [o, w] : {std::pair{0.0, 1.0}, {1.0, 0.5}, {-1.0, 2.0}, {2.0, 0.1}}) {
    const auto f = [o = o, w = w](double g) { return g > 0.0 ? std::exp(tpp::log_density_return(o, w, g)) : std::exp(o); };
    const double upper = std::max(1.0, (40.0 - o) / w);
    worst = std::max(worst, std::abs(gk(f, 0.0, upper) - 1.0));
  }
  const double secs = seconds_since(t0);
  report(1, worst < kNormTol && secs < 1.0, fmt("max |integral - 1| = %.2e, %.3f s", worst, secs));
}

void analytic_consistency() {
  std::mt19937_64 rng(2);
  double worst_density = 0.0, worst_survival = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double o = testing::uniform(rng, -4, 3), w = testing::uniform(rng, 0.01, 2), g = testing::uniform(rng, 0.01, 8);
    const double lhs = tpp::log_density_return(o, w, g);
    const double rhs = std::log(tpp::hazard(o, w, g)) + tpp::log_survival(o, w, g);
    worst_density = std::max(worst_density, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    const double integral = gk([&](double t) { return std::exp(o + w * t); }, 0.0, g);
    worst_survival = std::max(worst_survival, std::abs(tpp::log_survival(o, w, g) + integral) / std::max(1.0, integral));
  }
  report(2, worst_density <= kDensityTol && worst_survival <= kSurvivalTol,
         fmt("log f vs log(lambda S) %.2e, log S vs -int lambda %.2e (relative)", worst_density, worst_survival));
}

void gradient_check() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto shape = testing::small_shape(2, 2, 3, 3);
    auto n = testing::random_network(shape, 100 + trial);
    const auto seq = testing::random_sequence(shape, 3, rng, true);
    const double w = testing::uniform(rng, 0.05, 1.0);
    std::vector<double> grad(n.parameter_count(), 0.0);
    train::sequence_gradient(n, seq, tpp::make_loss(w), grad);
    auto value = [&] { return tpp::sequence_loss(n.forward(seq).output, seq.targets, true, w).loss; };
    auto params = n.parameters();
    // Central-difference roundoff grows like eps |L| / h, so the floor on
    // the denominator scales with the loss.
    const double fd_floor = 1e-6 * std::max(1.0, std::abs(value()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + kGradH;
      const double up = value();
      params[i] = saved - kGradH;
      const double down = value();
      params[i] = saved;
      const double fd = (up - down) / (2 * kGradH);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), fd_floor}));
    }
    ++instances;
  }
  report(3, worst < kGradRel, fmt("%.0f censored 3-step instances, max relative error %.2e", instances, worst));
}

void expectation() {
  bq::exp_sinh<double> integrator;
  const double quad = integrator.integrate([](double z) { return std::exp(-std::expm1(z)); });
  const double e1 = std::exp(1.0) * boost::math::expint(1, 1.0);
  const double ours = tpp::expected_return_time(0.0, 1.0).value;
  const bool at_zero = tpp::absence_conditioned_expectation(0.0, 1.0, 0.0).value == ours;
  std::mt19937_64 rng(4);
  int below = 0;
  for (int k = 0; k < 1000; ++k) {
    const double o = testing::uniform(rng, -6, 3), w = testing::uniform(rng, 0.01, 1.0), t = testing::uniform(rng, 0, 200);
    if (tpp::absence_conditioned_expectation(o, w, t).value < t) ++below;
  }
  const bool ok = std::abs(ours - quad) < kExpectationTol && std::abs(ours - e1) < kExpectationTol && at_zero && below == 0;
  report(4, ok, fmt("E = %.10f, quadrature oracle %.10f, e*E1(1) %.10f", ours, quad, e1) +
                    (at_zero ? ", t_s=0 exact" : ", t_s=0 MISMATCH") + ", below t_s: " + std::to_string(below) + "/1000");
}

struct Survival {
  Eigen::MatrixXd x;
  std::vector<double> times;
  std::vector<std::uint8_t> events;
};

double breslow(const Eigen::VectorXd& beta, const Survival& s) {
  const Eigen::VectorXd eta = s.x * beta;
  double ll = 0.0;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (!s.events[i]) continue;
    double risk = 0.0;
    for (std::size_t j = 0; j < s.times.size(); ++j)
      if (s.times[j] >= s.times[i]) risk += std::exp(eta(j));
    ll += eta(i) - std::log(risk);
  }
  return ll;
}

void cox_correctness() {
  const auto t0 = Clock::now();
  Eigen::MatrixXd two(2, 1);
  two << 0.3, -1.2;
  const std::vector<double> tt = {1.0, 2.0};
  const std::vector<std::uint8_t> ee = {1, 0};
  const double pl2 = cox::efron_partial_log_likelihood(Eigen::VectorXd::Zero(1), two, tt, ee).value;
  const bool log2_ok = pl2 == -std::log(2.0);

  std::mt19937_64 rng(5);
  double worst_eb = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Survival s;
    const int n = 40;
    s.x.resize(n, 3);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) s.x(i, k) = testing::uniform(rng, -1, 1);
      s.times.push_back(testing::uniform(rng, 0.1, 10));
      s.events.push_back(i < 2 || testing::uniform(rng, 0, 1) < 0.7);
    }
    Eigen::VectorXd beta(3);
    for (int k = 0; k < 3; ++k) beta(k) = testing::uniform(rng, -1, 1);
    const double e = cox::efron_partial_log_likelihood(beta, s.x, s.times, s.events).value;
    worst_eb = std::max(worst_eb, std::abs(e - breslow(beta, s)) / std::max(1.0, std::abs(e)));
  }

  Survival ph;
  ph.x.resize(2000, 1);
  std::exponential_distribution<double> unit(1.0);
  for (int i = 0; i < 2000; ++i) {
    ph.x(i, 0) = testing::uniform(rng, 0, 1) < 0.5 ? 1.0 : 0.0;
    const double t = unit(rng) / std::exp(0.7 * ph.x(i, 0));
    const double c = unit(rng) / 0.3;
    ph.times.push_back(std::min(t, c));
    ph.events.push_back(t <= c);
  }
  const double beta_hat = cox::fit(ph.x, ph.times, ph.events).beta(0);

  // Nelson-Aalen on the same data: sum over distinct event times of d / at-risk.
  const auto base = cox::cox_oakes_baseline(Eigen::VectorXd::Zero(1), ph.x, ph.times, ph.events);
  std::vector<std::size_t> order(ph.times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ph.times[a] < ph.times[b]; });
  double na = 0.0, worst_na = 0.0;
  std::size_t knot = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto i = order[r];
    if (!ph.events[i]) continue;
    na += 1.0 / static_cast<double>(order.size() - r);
    if (knot >= base.times.size()) {
      worst_na = INFINITY;
      break;
    }
    worst_na = std::max(worst_na, std::abs(base.cumulative[knot] - na) / na);
    ++knot;
  }
  if (knot != base.times.size()) worst_na = INFINITY;
  const double secs = seconds_since(t0);
  const bool ok = log2_ok && worst_eb <= kEfronBreslowTol && std::abs(beta_hat - 0.7) <= kBetaTol &&
                  worst_na <= kNelsonAalenTol && secs < 30.0;
  report(5, ok, fmt("Efron vs Breslow %.2e, beta_hat %.4f, Nelson-Aalen rel %.2e", worst_eb, beta_hat, worst_na) +
                    (log2_ok ? ", -log 2 exact" : ", -log 2 MISMATCH") + fmt(", %.2f s", secs));
}

void metric_oracles() {
  std::mt19937_64 rng(6);
  int mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<eval::PredictionRecord> r;
    for (int i = 0; i < 10; ++i) {
      const bool censored = i < 2 || (i >= 4 && testing::uniform(rng, 0, 1) < 0.3);
      const double observed = testing::uniform_int(rng, 1, 12);
      const double horizon = censored ? observed : observed + testing::uniform_int(rng, 0, 8);
      r.push_back(testing::record("u" + std::to_string(i), testing::uniform_int(rng, 0, 20), observed, censored, horizon));
    }
    double c_hit = 0, a_hit = 0;
    int c_pairs = 0, a_pairs = 0, cens = 0, rec = 0;
    for (const auto& a : r) {
      if (a.is_censored()) {
        ++cens;
        rec += a.predicted_return_days > a.horizon_gap_days;
      }
      for (const auto& b : r) {
        if (!a.is_censored() && a.observed_days() < b.observed_days()) {
          ++c_pairs;
          c_hit += a.predicted_return_days < b.predicted_return_days ? 1.0
                   : a.predicted_return_days == b.predicted_return_days ? 0.5 : 0.0;
        }
        if (a.is_censored() && !b.is_censored()) {
          const double sa = a.predicted_return_days - a.horizon_gap_days, sb = b.predicted_return_days - b.horizon_gap_days;
          ++a_pairs;
          a_hit += sa > sb ? 1.0 : sa == sb ? 0.5 : 0.0;
        }
      }
    }
    mismatches += eval::concordance_index(r) != c_hit / c_pairs;
    mismatches += eval::nonreturning_auc(r) != a_hit / a_pairs;
    mismatches += eval::nonreturning_recall(r) != static_cast<double>(rec) / cens;
  }
  report(6, mismatches == 0, "50 random 10-record instances, " + std::to_string(mismatches) + " mismatches");
}

experiment::RunConfig default_run() {
  auto c = experiment::parse_run_config(nlohmann::json::object());
  c.out = "";
  return c;
}

}  // namespace

int main() {
  normalization();
  analytic_consistency();
  gradient_check();
  expectation();
  cox_correctness();
  metric_oracles();

  const auto config = default_run();
  const auto t0 = Clock::now();
  const auto first = experiment::run_pipeline(config);
  const double secs = seconds_since(t0);
  const auto& m = first.report.models;
  auto metric = [&](const char* name) -> const eval::ModelMetrics& { return m.at(name); };

  const bool a = metric("baseline").nonreturning_recall == 0.0 && metric("rnn").nonreturning_recall == 0.0;
  const bool b = metric("rnnsm").nonreturning_recall > 0.0 &&
                 metric("rnnsma").nonreturning_recall >= metric("rnnsm").nonreturning_recall;
  const bool c = metric("rnnsm").nonreturning_auc > metric("baseline").nonreturning_auc;
  const bool d = metric("cph").concordance > 0.6 && metric("cph").concordance > 0.5 &&
                 metric("cph").concordance > metric("baseline").concordance;
  bool e = true;
  for (const char* other : {"cph", "cpha", "rnnsm", "rnnsma"}) e = e && metric("rnn").rmse_days < metric(other).rmse_days;
  char detail[512];
  std::snprintf(detail, sizeof detail,
                "(a) recall baseline %.3f rnn %.3f; (b) recall rnnsm %.3f rnnsma %.3f; (c) auc rnnsm %.3f baseline %.3f; "
                "(d) C cph %.3f baseline %.3f; (e) rmse rnn %.2f cph %.2f cpha %.2f rnnsm %.2f rnnsma %.2f; %.0f s",
                metric("baseline").nonreturning_recall, metric("rnn").nonreturning_recall,
                metric("rnnsm").nonreturning_recall, metric("rnnsma").nonreturning_recall,
                metric("rnnsm").nonreturning_auc, metric("baseline").nonreturning_auc, metric("cph").concordance,
                metric("baseline").concordance, metric("rnn").rmse_days, metric("cph").rmse_days,
                metric("cpha").rmse_days, metric("rnnsm").rmse_days, metric("rnnsma").rmse_days, secs);
  report(7, a && b && c && d && e && secs < 600.0, detail);

  const auto& rnnsma = first.predictions.at("rnnsma");
  const double heavy = eval::rmse_for_active_days(rnnsma, 32, INT_MAX);
  const double light = eval::rmse_for_active_days(rnnsma, 1, 4);
  const auto& cpha = first.predictions.at("cpha");
  report(8, heavy < light,
         fmt("RNNSMA rmse >=32 days %.2f vs 1-4 days %.2f", heavy, light) +
             fmt(" (CPHA, not asserted: %.2f vs %.2f)", eval::rmse_for_active_days(cpha, 32, INT_MAX),
                 eval::rmse_for_active_days(cpha, 1, 4)));

  const auto second = experiment::run_pipeline(config);
  const auto ja = first.report.to_json().dump(), jb = second.report.to_json().dump();
  report(9, ja == jb, ja == jb ? "report JSON identical across two seeded runs" : "report JSON differs");

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
