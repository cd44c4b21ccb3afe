#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

// Data-parallel kernels over users. Every parallel kernel has a serial
// reference twin that performs the same floating-point operations in the
// same order, so the two produce bitwise-identical results for any thread
// count. Tests compare them; bench/ times them.

namespace rnnsm::kernels {

/// Writes one user's gradient into `grad` (pre-zeroed) and returns its loss.
using UserGradientFn = std::function<double(std::size_t user, std::span<double> grad)>;

/// Sums per-user gradients into `out` (overwritten) in index order of `users`
/// and returns the summed loss.
double accumulate_gradients_serial(std::span<const std::size_t> users, const UserGradientFn& fn,
                                   std::span<double> out);
double accumulate_gradients_parallel(std::span<const std::size_t> users, const UserGradientFn& fn,
                                     std::span<double> out);

/// out[i] = fn(i) for i < n.
std::vector<double> map_serial(std::size_t n, const std::function<double(std::size_t)>& fn);
std::vector<double> map_parallel(std::size_t n, const std::function<double(std::size_t)>& fn);

/// Harrell pair counts. Counts are doubled so ties (worth 1/2) stay integral.
struct PairCounts {
  std::int64_t concordant_x2 = 0;
  std::int64_t comparable = 0;
};

/// A pair (a, b) is comparable when a is an observed event and
/// time[a] < time[b]; it is concordant when predicted[a] < predicted[b].
PairCounts concordance_pairs_serial(std::span<const double> time, std::span<const std::uint8_t> event,
                                    std::span<const double> predicted);
PairCounts concordance_pairs_parallel(std::span<const double> time, std::span<const std::uint8_t> event,
                                      std::span<const double> predicted);

/// Number of OpenMP threads used by the parallel kernels (1 without OpenMP).
int thread_count();
void set_thread_count(int n);

}  // namespace rnnsm::kernels
