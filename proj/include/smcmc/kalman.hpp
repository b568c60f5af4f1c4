#pragma once

#include "smcmc/lin_gauss.hpp"

namespace smcmc {

struct GaussianBelief {
  Vector mean;
  Matrix cov;

  void validate() const;
  /// Marginal cdf of coordinate `d`.
  double marginal_cdf(Index d, double value) const;
};

/// Exact filtering recursion for LinGaussParams: predict with (A, Q), then a
/// conjugate update with (H, R_obs) for each measurement of the batch in order.
GaussianBelief kalman_step(const GaussianBelief& belief, const LinGaussParams& params,
                           const MeasurementBatch& batch);

GaussianBelief kalman_predict(const GaussianBelief& belief, const LinGaussParams& params);

}  // namespace smcmc
