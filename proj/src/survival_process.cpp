#include "rnnsm/survival_process.hpp"

#include <cmath>
#include <sstream>

#include "rnnsm/errors.hpp"
#include "rnnsm/quadrature.hpp"

namespace rnnsm::tpp {

namespace {

constexpr double kMaxExponent = 700.0;

void require_positive_w(double w) {
  if (!(w > 0.0) || !std::isfinite(w)) {
    throw ConfigError("current-influence weight w must be > 0 (got " + std::to_string(w) + ")");
  }
}

void check_exponent(double o, double w, double gap, const char* what) {
  const double e = o + w * gap;
  if (!std::isfinite(e) || e > kMaxExponent || o > kMaxExponent) {
    std::ostringstream os;
    os << what << ": exponent overflow (o=" << o << ", w=" << w << ", gap=" << gap << ")";
    throw NumericalError(os.str());
  }
}

}  // namespace

double hazard(double o, double w, double dt) {
  if (dt < 0.0) throw ValidationError("hazard: dt must be >= 0");
  check_exponent(o, w, dt, "hazard");
  return std::exp(o + w * dt);
}

double log_survival(double o, double w, double gap) {
  require_positive_w(w);
  if (!(gap >= 0.0)) throw ValidationError("log_survival: gap must be >= 0");
  check_exponent(o, w, gap, "log_survival");
  return -std::exp(o) / w * std::expm1(w * gap);
}

double log_density_return(double o, double w, double gap) {
  if (!(gap > 0.0)) throw ValidationError("log_density_return: gap must be > 0");
  return o + w * gap + log_survival(o, w, gap);
}

double d_log_survival_do(double o, double w, double gap) { return log_survival(o, w, gap); }

double d_log_density_return_do(double o, double w, double gap) {
  return 1.0 + log_survival(o, w, gap);
}

double survival(double o, double w, double gap) {
  const double growth = std::expm1(w * gap);
  if (growth <= 0.0) return 1.0;
  if (!std::isfinite(growth)) return 0.0;
  return std::exp(-std::exp(o - std::log(w) + std::log(growth)));
}

Expectation expected_return_time(double o, double w, const QuadratureOptions& options) {
  require_positive_w(w);
  if (!std::isfinite(o)) throw NumericalError("expected_return_time: non-finite o");
  double upper = options.initial_upper;
  for (int k = 0; survival(o, w, upper) >= options.survival_floor; ++k) {
    if (k > 60) throw NumericalError("expected_return_time: no finite upper limit found");
    upper *= 2.0;
  }
  // High hazard: S is negligible long before initial_upper, and a wide first
  // panel can miss the mass near 0 entirely.
  while (upper > 1e-12 && survival(o, w, upper / 2.0) < options.survival_floor) upper /= 2.0;
  auto integrand = [o, w](double z) { return survival(o, w, z); };
  const auto r = quad::gauss_kronrod(integrand, 0.0, upper, options.abs_tol, 1e-13, 4000);
  if (!r.converged) {
    std::ostringstream os;
    os << "expected_return_time: quadrature did not converge (o=" << o << ", w=" << w
       << ", U=" << upper << ", error " << r.error_estimate << " over " << r.intervals << " intervals)";
    throw NumericalError(os.str());
  }
  Expectation e;
  e.value = r.value;
  e.error_estimate = r.error_estimate;
  e.upper_limit = upper;
  const double exponent = o + w * upper;
  e.tail_bound = exponent > kMaxExponent ? 0.0 : survival(o, w, upper) / std::exp(exponent);
  return e;
}

Expectation absence_conditioned_expectation(double o, double w, double t_s,
                                            const QuadratureOptions& options) {
  require_positive_w(w);
  if (!(t_s >= 0.0)) throw ValidationError("absence_conditioned_expectation: t_s must be >= 0");
  if (t_s == 0.0) return expected_return_time(o, w, options);
  Expectation e = expected_return_time(o + w * t_s, w, options);
  e.value += t_s;
  e.survival_underflow = survival(o, w, t_s) < 1e-300;
  return e;
}

}  // namespace rnnsm::tpp
