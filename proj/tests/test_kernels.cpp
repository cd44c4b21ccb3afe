#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "rnnsm/kernels.hpp"
#include "support.hpp"

using namespace rnnsm;

TEST_CASE("serial and parallel kernels agree bitwise") {
  const int saved = kernels::thread_count();
  std::mt19937_64 rng(404);
  for (int threads : {1, 2, 4}) {
    kernels::set_thread_count(threads);

    std::vector<std::size_t> users(97);
    std::iota(users.begin(), users.end(), 0);
    std::shuffle(users.begin(), users.end(), rng);
    const kernels::UserGradientFn fn = [](std::size_t u, std::span<double> g) {
      for (std::size_t k = 0; k < g.size(); ++k) g[k] = std::sin(0.37 * u + k) / (1.0 + u);
      return std::exp(-0.01 * u) + 1e-7 * u;
    };
    std::vector<double> a(13), b(13);
    const double la = kernels::accumulate_gradients_serial(users, fn, a);
    const double lb = kernels::accumulate_gradients_parallel(users, fn, b);
    CHECK(la == lb);
    CHECK(a == b);

    const auto f = [](std::size_t i) { return std::log1p(static_cast<double>(i)) * 0.1; };
    CHECK(kernels::map_serial(1000, f) == kernels::map_parallel(1000, f));

    std::vector<double> time(300), pred(300);
    std::vector<std::uint8_t> event(300);
    for (std::size_t i = 0; i < time.size(); ++i) {
      time[i] = testing::uniform_int(rng, 1, 40);
      pred[i] = testing::uniform_int(rng, 1, 40);
      event[i] = testing::uniform(rng, 0, 1) < 0.6;
    }
    const auto s = kernels::concordance_pairs_serial(time, event, pred);
    const auto p = kernels::concordance_pairs_parallel(time, event, pred);
    CHECK(s.concordant_x2 == p.concordant_x2);
    CHECK(s.comparable == p.comparable);
    CHECK(s.comparable > 0);
  }
  kernels::set_thread_count(saved);
}

TEST_CASE("empty inputs") {
  std::vector<double> out(3, 5.0);
  const kernels::UserGradientFn fn = [](std::size_t, std::span<double>) { return 1.0; };
  CHECK(kernels::accumulate_gradients_parallel({}, fn, out) == 0.0);
  CHECK(out == std::vector<double>(3, 0.0));
  CHECK(kernels::map_parallel(0, [](std::size_t) { return 1.0; }).empty());
}
