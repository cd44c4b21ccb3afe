#include "rnnsm/kernels.hpp"

#include <algorithm>
#include <exception>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rnnsm::kernels {

namespace {

// Rethrows the exception of the lowest failing index so parallel and serial
// runs report the same error.
class FirstError {
 public:
  explicit FirstError(std::size_t n) : errors_(n) {}
  void capture(std::size_t i) { errors_[i] = std::current_exception(); }
  void rethrow() const {
    for (const auto& e : errors_)
      if (e) std::rethrow_exception(e);
  }

 private:
  std::vector<std::exception_ptr> errors_;
};

std::int64_t row_concordance_x2(std::size_t a, std::span<const double> time,
                                std::span<const double> predicted, std::int64_t& comparable) {
  std::int64_t concordant = 0;
  for (std::size_t b = 0; b < time.size(); ++b) {
    if (!(time[a] < time[b])) continue;
    ++comparable;
    if (predicted[a] < predicted[b]) {
      concordant += 2;
    } else if (predicted[a] == predicted[b]) {
      concordant += 1;
    }
  }
  return concordant;
}

}  // namespace

double accumulate_gradients_serial(std::span<const std::size_t> users, const UserGradientFn& fn,
                                   std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> scratch(out.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < users.size(); ++k) {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    loss += fn(users[k], scratch);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scratch[i];
  }
  return loss;
}

double accumulate_gradients_parallel(std::span<const std::size_t> users, const UserGradientFn& fn,
                                     std::span<double> out) {
  const std::size_t n = users.size(), p = out.size();
  std::vector<double> per_user(n * p, 0.0);
  std::vector<double> losses(n, 0.0);
  FirstError errors(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    const auto uk = static_cast<std::size_t>(k);
    try {
      losses[uk] = fn(users[uk], std::span<double>(per_user.data() + uk * p, p));
    } catch (...) {
      errors.capture(uk);
    }
  }
  errors.rethrow();

  std::fill(out.begin(), out.end(), 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < n; ++k) loss += losses[k];
  // Parameters are independent, so the fixed-order sum over users can be
  // split across threads by parameter index.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(p); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += per_user[k * p + static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return loss;
}

std::vector<double> map_serial(std::size_t n, const std::function<double(std::size_t)>& fn) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
  return out;
}

std::vector<double> map_parallel(std::size_t n, const std::function<double(std::size_t)>& fn) {
  std::vector<double> out(n);
  FirstError errors(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors.capture(static_cast<std::size_t>(i));
    }
  }
  errors.rethrow();
  return out;
}

PairCounts concordance_pairs_serial(std::span<const double> time, std::span<const std::uint8_t> event,
                                    std::span<const double> predicted) {
  PairCounts c;
  for (std::size_t a = 0; a < time.size(); ++a) {
    if (!event[a]) continue;
    c.concordant_x2 += row_concordance_x2(a, time, predicted, c.comparable);
  }
  return c;
}

PairCounts concordance_pairs_parallel(std::span<const double> time, std::span<const std::uint8_t> event,
                                      std::span<const double> predicted) {
  std::int64_t concordant = 0, comparable = 0;
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : concordant, comparable)
  for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(time.size()); ++a) {
    if (!event[static_cast<std::size_t>(a)]) continue;
    concordant += row_concordance_x2(static_cast<std::size_t>(a), time, predicted, comparable);
  }
  return {concordant, comparable};
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace rnnsm::kernels
