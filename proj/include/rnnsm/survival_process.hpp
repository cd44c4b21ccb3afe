#pragma once

namespace rnnsm::tpp {

/// Conditional intensity exp(o + w * dt) of the next return, dt days after
/// the last session end. o = v.h_j + b carries the history and base rate.
/// Throws NumericalError if the exponent exceeds 700.
double hazard(double o, double w, double dt);

/// log S(gap) = (e^o / w) (1 - e^{w gap}), evaluated through expm1.
double log_survival(double o, double w, double gap);

/// log f(gap) = o + w gap + log S(gap), for an observed return (gap > 0).
double log_density_return(double o, double w, double gap);

/// d/do of the two log-likelihood terms.
double d_log_survival_do(double o, double w, double gap);
double d_log_density_return_do(double o, double w, double gap);

/// S(gap) without overflow checks; underflows cleanly to 0.
double survival(double o, double w, double gap);

struct Expectation {
  double value = 0.0;
  /// Quadrature error estimate on [0, upper_limit].
  double error_estimate = 0.0;
  /// Analytic bound on the neglected tail: S(U) / lambda(U).
  double tail_bound = 0.0;
  double upper_limit = 0.0;
  /// Set when S(t_s) < 1e-300 in the absence-conditioned variant.
  bool survival_underflow = false;
};

struct QuadratureOptions {
  /// First upper limit tried; doubled until S(U) < survival_floor, or halved
  /// while S(U/2) is already below it.
  double initial_upper = 480.0;
  double survival_floor = 1e-9;
  double abs_tol = 1e-8;
};

/// E[gap] = integral of S over (0, inf). Requires w > 0 (ConfigError otherwise);
/// throws NumericalError if the quadrature does not converge.
Expectation expected_return_time(double o, double w, const QuadratureOptions& options = {});

/// E[gap | gap > t_s] = t_s + integral_{t_s}^{inf} S(z) / S(t_s) dz. Always >= t_s.
/// The shifted integral is itself the expectation of the same process with
/// o' = o + w t_s, so it never divides by an underflowed S(t_s).
Expectation absence_conditioned_expectation(double o, double w, double t_s,
                                            const QuadratureOptions& options = {});

}  // namespace rnnsm::tpp
