#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rnnsm/data.hpp"
#include "rnnsm/evaluation.hpp"
#include "rnnsm/features.hpp"

namespace rnnsm::cox {

struct PartialLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Efron tie-corrected partial log-likelihood with analytic gradient and
/// Hessian. Censored rows (events[i] == 0) only enter risk sets. Event times
/// are grouped as ties after rounding to 1e-9 days.
PartialLikelihood efron_partial_log_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                               std::span<const double> times,
                                               std::span<const std::uint8_t> events);

/// Cumulative baseline hazard H0 as knots (t_k, H0(t_k)), linear between
/// knots from H0(0) = 0, and a constant hazard rate beyond the last knot.
/// A Cox-Oakes estimate places one knot per distinct event time.
struct BaselineHazard {
  std::vector<double> times;
  std::vector<double> cumulative;
  double tail_rate = 0.0;

  /// Knots from piecewise-constant rates: rates[k] applies on
  /// [breaks[k-1], breaks[k]) with breaks[-1] = 0; the last rate is the tail.
  static BaselineHazard from_rates(const std::vector<double>& breaks, const std::vector<double>& rates);

  double cumulative_at(double t) const;
  double survival_at(double t, double risk_multiplier = 1.0) const;
};

struct CoxFitOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-7;
  double ridge = 1e-6;
  double condition_limit = 1e12;
  /// Number of trailing event intervals averaged for the tail hazard rate.
  int tail_window = 10;
};

void to_json(nlohmann::json& j, const CoxFitOptions& o);
void from_json(const nlohmann::json& j, CoxFitOptions& o);

struct CoxModel {
  std::vector<std::string> feature_names;
  Eigen::VectorXd beta;
  /// log1p is applied to every aggregate column except gap_missing before
  /// standardization (the columns are non-negative and heavily skewed).
  bool log_transform = true;
  /// Standardization applied to the (transformed) covariates before beta.
  features::NormStats standardizer;
  BaselineHazard baseline;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  bool ridge_used = false;

  double risk_score(std::span<const double> raw_features) const;
};

/// Newton-Raphson with step halving on the Efron partial likelihood until the
/// gradient max-norm falls below tolerance (or the line search stalls with a
/// Newton decrement below 1e-12 |loglik|, i.e. the optimum is reached to
/// working precision), then the Cox-Oakes baseline
/// d_(i) / sum_{R(t_(i))} exp(beta'x). Covariates are used as given.
/// Throws NumericalError on non-convergence and ValidationError with < 2 events.
CoxModel fit(const Eigen::MatrixXd& x, std::span<const double> times, std::span<const std::uint8_t> events,
             const CoxFitOptions& options = {});

/// Cox-Oakes baseline for a given beta.
BaselineHazard cox_oakes_baseline(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                  std::span<const double> times, std::span<const std::uint8_t> events,
                                  int tail_window = 10);

struct SurvivalTime {
  double value = 0.0;
  /// S(t_s) < 1e-300 under absence conditioning.
  bool survival_underflow = false;
};

/// Integral of S(t|x) = exp(-H0(t) e^{risk}) over (0, inf), exact on each
/// linear piece of H0 plus the constant-rate tail. With conditioning:
/// t_s + integral_{t_s}^{inf} S(z) / S(t_s) dz.
SurvivalTime expected_survival_time(const BaselineHazard& baseline, double risk_score,
                                    bool condition_on_absence = false, double t_s = 0.0);

/// Covariate rows of the aggregate features as used by the model.
std::vector<std::vector<double>> model_covariates(const features::AggregateFeatures& agg, bool log_transform);

/// Aggregate features -> log1p -> standardization -> fit, with survival targets from
/// final_gap (returning users uncensored, the rest censored at horizon_end).
CoxModel fit_dataset(const data::Dataset& train_set, const CoxFitOptions& options = {},
                     bool log_transform = true);

/// CPH (unconditioned) or CPHA (conditioned on the absence time at
/// prediction_start) predictions.
std::vector<eval::PredictionRecord> predict(const CoxModel& model, const data::Dataset& dataset,
                                            bool condition_on_absence);

nlohmann::json save_model(const CoxModel& model);
CoxModel load_model(const nlohmann::json& j);

}  // namespace rnnsm::cox
