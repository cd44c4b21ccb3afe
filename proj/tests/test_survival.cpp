#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/expint.hpp>

#include "rnnsm/errors.hpp"
#include "rnnsm/quadrature.hpp"
#include "rnnsm/survival_model.hpp"
#include "rnnsm/survival_process.hpp"
#include "support.hpp"

using namespace rnnsm;
namespace bq = boost::math::quadrature;

namespace {

// Upper limit where the integrated hazard e^o (e^{wU} - 1) / w exceeds ~e^40.
double far_limit(double o, double w) { return std::max(1.0, (40.0 - o) / w); }

double oracle_integral(const std::function<double(double)>& f, double a, double b) {
  return bq::gauss_kronrod<double, 61>::integrate(f, a, b, 25, 1e-14);
}

double survival_direct(double o, double w, double z) { return std::exp(-std::exp(o) / w * (std::exp(w * z) - 1.0)); }

}  // namespace

TEST_CASE("hazard values") {
  CHECK(tpp::hazard(0.0, 1.0, 0.0) == 1.0);
  CHECK(tpp::hazard(std::log(2.0), 0.5, 2.0) == doctest::Approx(2.0 * std::exp(1.0)).epsilon(1e-14));
  double prev = 0.0;
  for (double dt = 0.0; dt < 30.0; dt += 0.25) {
    const double h = tpp::hazard(-1.0, 0.3, dt);
    CHECK(h > prev);
    prev = h;
  }
  CHECK_THROWS_AS(tpp::hazard(0.0, 1.0, 800.0), NumericalError);
  CHECK_THROWS_AS(tpp::hazard(0.0, 1.0, -1.0), ValidationError);
}

TEST_CASE("log survival limits and errors") {
  CHECK(tpp::log_survival(0.3, 0.7, 0.0) == 0.0);
  CHECK(tpp::log_survival(0.0, 1.0, 50.0) < -1e20);
  CHECK(tpp::survival(0.0, 1.0, 1e6) == 0.0);
  CHECK_THROWS_AS(tpp::log_survival(0.0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(tpp::log_survival(0.0, -0.5, 1.0), ConfigError);
  CHECK_THROWS_AS(tpp::log_survival(0.0, 1.0, -1.0), ValidationError);
  CHECK_THROWS_AS(tpp::log_density_return(0.0, 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(tpp::expected_return_time(0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(tpp::absence_conditioned_expectation(0.0, 1.0, -1.0), ValidationError);
}

TEST_CASE("density at the origin equals the hazard there") {
  CHECK(std::abs(tpp::log_density_return(0.0, 1.0, 1e-300)) < 1e-12);
}

TEST_CASE("density integrates to one") {
  for (auto [o, w] : {std::pair{0.0, 1.0}, {1.0, 0.5}, {-1.0, 2.0}, {2.0, 0.1}}) {
    const auto f = [o = o, w = w](double g) { return g > 0.0 ? std::exp(tpp::log_density_return(o, w, g)) : std::exp(o); };
    CHECK(std::abs(oracle_integral(f, 0.0, far_limit(o, w)) - 1.0) < 1e-6);
  }
}

TEST_CASE("density equals hazard times survival") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    const double o = testing::uniform(rng, -4, 3), w = testing::uniform(rng, 0.01, 2), g = testing::uniform(rng, 0.01, 8);
    const double lhs = tpp::log_density_return(o, w, g);
    const double rhs = std::log(tpp::hazard(o, w, g)) + tpp::log_survival(o, w, g);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("log survival is minus the integrated hazard") {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 30; ++k) {
    const double o = testing::uniform(rng, -3, 2), w = testing::uniform(rng, 0.05, 1.5), g = testing::uniform(rng, 0.1, 6);
    const double integral = oracle_integral([&](double t) { return std::exp(o + w * t); }, 0.0, g);
    CHECK(std::abs(tpp::log_survival(o, w, g) + integral) < 1e-8 * std::max(1.0, integral));
  }
}

TEST_CASE("one-step sequence loss") {
  const std::vector<double> o = {0.4}, t = {2.5};
  CHECK(tpp::sequence_loss(o, t, false, 0.3).loss == doctest::Approx(-tpp::log_density_return(0.4, 0.3, 2.5)).epsilon(1e-15));
  CHECK(tpp::sequence_loss(o, t, true, 0.3).loss == doctest::Approx(-tpp::log_survival(0.4, 0.3, 2.5)).epsilon(1e-15));
  const std::vector<double> two = {1.0, 2.0};
  CHECK_THROWS_AS(tpp::sequence_loss(o, two, false, 0.3), ValidationError);
}

TEST_CASE("censored term equals one minus the CDF") {
  for (auto [o, w, g] : {std::tuple{0.0, 1.0, 0.7}, {-1.0, 0.2, 4.0}, {0.5, 0.05, 1.3}}) {
    const std::vector<double> out = {o}, tgt = {g};
    const double surv = std::exp(-tpp::sequence_loss(out, tgt, true, w).loss);
    const double cdf = oracle_integral([o = o, w = w](double z) { return std::exp(o + w * z) * survival_direct(o, w, z); }, 0.0, g);
    CHECK(std::abs(surv - (1.0 - cdf)) < 1e-6);
  }
}

TEST_CASE("sequence loss gradient matches finite differences") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = testing::uniform_int(rng, 1, 5);
    std::vector<double> o(n), t(n);
    for (int j = 0; j < n; ++j) {
      o[j] = testing::uniform(rng, -3, 1);
      t[j] = testing::uniform(rng, 0.1, 5);
    }
    const bool censored = trial % 2 == 0;
    const double w = testing::uniform(rng, 0.05, 1.0);
    const auto r = tpp::sequence_loss(o, t, censored, w);
    for (int j = 0; j < n; ++j) {
      const double h = 1e-6, saved = o[j];
      o[j] = saved + h;
      const double up = tpp::sequence_loss(o, t, censored, w).loss;
      o[j] = saved - h;
      const double down = tpp::sequence_loss(o, t, censored, w).loss;
      o[j] = saved;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(fd - r.grad_o[j]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("expected return time against the exponential integral") {
  const double oracle = std::exp(1.0) * boost::math::expint(1, 1.0);
  CHECK(oracle == doctest::Approx(0.596347362323194).epsilon(1e-14));
  const auto e = tpp::expected_return_time(0.0, 1.0);
  CHECK(std::abs(e.value - oracle) < 1e-8);
  CHECK(e.tail_bound < 1e-9);

  // Closed form for general (o, w): E = e^{a} E1(a) / w with a = e^o / w.
  for (auto [o, w] : {std::pair{-2.0, 0.05}, {1.0, 0.5}, {-4.0, 0.01}, {2.0, 1.0}}) {
    const double a = std::exp(o) / w;
    CHECK(tpp::expected_return_time(o, w).value == doctest::Approx(std::exp(a) * boost::math::expint(1, a) / w).epsilon(1e-7));
  }
}

TEST_CASE("expectation is positive and strictly decreasing in o") {
  for (double w : {0.01, 0.1, 1.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double o = -6.0; o <= 4.0; o += 0.5) {
      const double e = tpp::expected_return_time(o, w).value;
      CHECK(e > 0.0);
      CHECK(e < prev);
      prev = e;
    }
  }
}

TEST_CASE("absence conditioning") {
  CHECK(tpp::absence_conditioned_expectation(0.0, 1.0, 0.0).value == tpp::expected_return_time(0.0, 1.0).value);

  // E[T | T > t_s] by brute-force quadrature of S(z)/S(t_s) over (t_s, inf).
  const double ts = 0.5;
  const double tail = oracle_integral([&](double z) { return survival_direct(0.0, 1.0, z); }, ts, 40.0);
  const double exact = ts + tail / survival_direct(0.0, 1.0, ts);
  CHECK(tpp::absence_conditioned_expectation(0.0, 1.0, ts).value == doctest::Approx(exact).epsilon(1e-8));

  std::mt19937_64 rng(6);
  for (int k = 0; k < 1000; ++k) {
    const double o = testing::uniform(rng, -6, 3), w = testing::uniform(rng, 0.01, 1.0), t = testing::uniform(rng, 0, 200);
    CHECK(tpp::absence_conditioned_expectation(o, w, t).value >= t);
  }

  // Deep in the tail S(t_s) underflows; the shifted form still answers.
  const auto deep = tpp::absence_conditioned_expectation(2.0, 1.0, 10.0);
  CHECK(deep.survival_underflow);
  CHECK(deep.value >= 10.0);
}

TEST_CASE("the literal two-integral form can fall below the absence time") {
  // int_{ts}^inf S / S(ts) + int_0^{ts} S for a high-hazard user.
  const double o = 3.0, w = 1.0, ts = 2.0;
  const double s_ts = survival_direct(o, w, ts);
  const double head = oracle_integral([&](double z) { return survival_direct(o, w, z); }, 0.0, ts);
  const double tail = oracle_integral([&](double z) { return survival_direct(o, w, z) / s_ts; }, ts, ts + 5.0);
  CHECK(head + tail < ts);
  CHECK(tpp::absence_conditioned_expectation(o, w, ts).value >= ts);
}

TEST_CASE("Gauss-Kronrod integrator against Boost's tanh-sinh") {
  bq::tanh_sinh<double> ts;
  const auto f = [](double x) { return std::exp(-x) * std::sin(3 * x) + 1.0 / (1.0 + x * x); };
  const auto ours = quad::gauss_kronrod(f, 0.0, 10.0, 1e-13, 1e-13);
  CHECK(ours.converged);
  CHECK(ours.value == doctest::Approx(ts.integrate(f, 0.0, 10.0)).epsilon(1e-12));
  const auto sqrt_singular = quad::gauss_kronrod([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, 1e-10, 1e-12, 4000);
  CHECK(sqrt_singular.value == doctest::Approx(2.0).epsilon(1e-8));
}
