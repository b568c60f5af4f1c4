#pragma once

#include "smcmc/model.hpp"

namespace smcmc {

/// x_k = A x_{k-1} + N(0, Q);  z^c_k = H x_k + N(0, R_obs), independently per c.
struct LinGaussParams {
  Matrix A;
  Matrix Q;
  Matrix H;
  Matrix R_obs;

  /// Scalar model. Defaults are the dynamic Gaussian process benchmark:
  /// A = 0.9, Q = 0.08, H = 1, R_obs = 2.
  static LinGaussParams scalar(double a = 0.9, double q = 0.08, double h = 1.0, double r = 2.0);

  Index state_dim() const { return A.rows(); }
  Index measurement_dim() const { return H.rows(); }
  void validate() const;
};

class LinGaussModel final : public StateSpaceModel {
 public:
  explicit LinGaussModel(LinGaussParams params);

  const LinGaussParams& params() const { return params_; }

  Index state_dim() const override { return params_.state_dim(); }
  Index measurement_dim() const override { return params_.measurement_dim(); }

  double log_lik(MeasurementView z, const StateVector& x) const override;
  void log_lik_many(const MeasurementBatch& batch, std::span<const Index> indices,
                    const StateVector& x, std::span<double> out) const override;
  double log_lik_sum(const MeasurementBatch& batch, const StateVector& x) const override;
  StateVector grad_log_lik(MeasurementView z, const StateVector& x) const override;
  void grad_log_lik_all(const MeasurementBatch& batch, const StateVector& x,
                        Matrix& out) const override;
  double hessian_bound() const override { return hessian_bound_; }
  const GaussianTransition& transition() const override { return transition_; }

  /// Draws M measurements from N(H x, R_obs).
  MeasurementBatch simulate_measurements(const StateVector& x, Index count, Rng& rng) const;

 private:
  double quad_residual(const double* z, const Vector& hx) const;

  LinGaussParams params_;
  GaussianTransition transition_;
  Matrix r_inv_;
  Matrix r_chol_;
  Matrix ht_r_inv_;
  double log_norm_ = 0.0;
  double hessian_bound_ = 0.0;
};

}  // namespace smcmc
