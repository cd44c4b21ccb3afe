#pragma once

#include <functional>

namespace rnnsm::quad {

struct Result {
  double value = 0.0;
  double error_estimate = 0.0;
  int intervals = 0;
  bool converged = false;
};

/// Globally adaptive Gauss-Kronrod (7/15-point) integration of f over [a, b]:
/// the interval with the largest error estimate is bisected until the summed
/// estimate drops below max(abs_tol, rel_tol * |value|) or max_intervals is hit.
Result gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                     double abs_tol = 1e-10, double rel_tol = 1e-12, int max_intervals = 2000);

}  // namespace rnnsm::quad
