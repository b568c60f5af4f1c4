#pragma once

#include "smcmc/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace smcmc {

struct StageCounter {
  std::int64_t accepted = 0;
  std::int64_t proposed = 0;

  void record(bool accept) {
    ++proposed;
    if (accept) ++accepted;
  }
  /// Acceptance rate in percent; NaN when nothing was proposed.
  double rate_percent() const;
  StageCounter& operator+=(const StageCounter& other);
};

/// Per time-step bookkeeping of one filter run (or one node / EP round).
struct StepDiagnostics {
  StageCounter joint;
  StageCounter refine_prev;
  StageCounter refine_current;
  std::int64_t likelihood_evals = 0;
  std::int64_t gradient_evals = 0;
  /// Adaptive-subsampling decisions with a nonempty batch, and the sum of
  /// S_m / M_k over them.
  std::int64_t subsample_decisions = 0;
  double consumed_fraction_sum = 0.0;
  /// Gibbs refinements of x_{k-1} whose weights all underflowed.
  std::int64_t prev_fallbacks = 0;
  double wall_ms = 0.0;

  /// Mean S_m / M_k; NaN when no subsampled decision was made.
  double consumed_fraction() const;
  StepDiagnostics& operator+=(const StepDiagnostics& other);
};

/// Two-sided sup_x |F_hat(x) - G(x)| over the step edges of the empirical cdf.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& oracle_cdf);

/// One-sided max_x (F_hat(x) - G(x)).
double ks_statistic_one_sided(std::span<const double> samples,
                              const std::function<double(double)>& oracle_cdf);

/// Per step: sqrt(mean over `dims` of squared error).
std::vector<double> rmse_positions(std::span<const StateVector> estimates,
                                   std::span<const StateVector> truth, std::span<const Index> dims);

double rmse_position(const StateVector& estimate, const StateVector& truth, std::span<const Index> dims);

struct AcceptanceSummary {
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

AcceptanceSummary acceptance_summary(std::span<const double> rates);

}  // namespace smcmc
