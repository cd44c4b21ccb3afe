#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "rnnsm/kernels.hpp"

using namespace rnnsm;

namespace {

// Stand-in per-user work roughly the cost of a short LSTM pass.
double busy(std::size_t u, std::span<double> g) {
  double acc = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k] = std::sin(0.001 * static_cast<double>(u * 31 + k));
    acc += g[k] * g[k];
  }
  return acc;
}

std::vector<std::size_t> users(std::size_t n) {
  std::vector<std::size_t> u(n);
  std::iota(u.begin(), u.end(), 0);
  return u;
}

void BM_GradSerial(benchmark::State& state) {
  const auto u = users(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(2000);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::accumulate_gradients_serial(u, busy, out));
}

void BM_GradParallel(benchmark::State& state) {
  const auto u = users(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(2000);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::accumulate_gradients_parallel(u, busy, out));
}

double mapped(std::size_t i) {
  double x = 0.0;
  for (int k = 0; k < 200; ++k) x += std::log1p(static_cast<double>(i + k));
  return x;
}

void BM_MapSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(kernels::map_serial(static_cast<std::size_t>(state.range(0)), mapped));
}

void BM_MapParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(kernels::map_parallel(static_cast<std::size_t>(state.range(0)), mapped));
}

struct Pairs {
  std::vector<double> time, pred;
  std::vector<std::uint8_t> event;
};

Pairs pairs(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  Pairs p;
  for (std::size_t i = 0; i < n; ++i) {
    p.time.push_back(u(rng));
    p.pred.push_back(u(rng));
    p.event.push_back(u(rng) < 70.0);
  }
  return p;
}

void BM_ConcordanceSerial(benchmark::State& state) {
  const auto p = pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::concordance_pairs_serial(p.time, p.event, p.pred));
}

void BM_ConcordanceParallel(benchmark::State& state) {
  const auto p = pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::concordance_pairs_parallel(p.time, p.event, p.pred));
}

}  // namespace

BENCHMARK(BM_GradSerial)->Arg(256)->Arg(2048);
BENCHMARK(BM_GradParallel)->Arg(256)->Arg(2048);
BENCHMARK(BM_MapSerial)->Arg(2000);
BENCHMARK(BM_MapParallel)->Arg(2000);
BENCHMARK(BM_ConcordanceSerial)->Arg(400)->Arg(4000);
BENCHMARK(BM_ConcordanceParallel)->Arg(400)->Arg(4000);

BENCHMARK_MAIN();
