#pragma once

#include "smcmc/rng.hpp"
#include "smcmc/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace smcmc {

/// Linear-Gaussian transition density p(x_k | x_{k-1}) = N(x_k; A x_{k-1}, Q).
/// Q may be singular for sampling; densities require it to be invertible.
class GaussianTransition {
 public:
  GaussianTransition() = default;
  GaussianTransition(Matrix A, Matrix Q);

  Index dim() const { return A_.rows(); }
  const Matrix& A() const { return A_; }
  const Matrix& Q() const { return Q_; }
  bool invertible() const { return invertible_; }

  /// Q^{-1}; throws ContractViolation when Q is singular.
  const Matrix& precision() const;

  StateVector mean(const StateVector& x_prev) const { return A_ * x_prev; }
  StateVector sample(const StateVector& x_prev, Rng& rng) const;
  double log_density(const StateVector& x, const StateVector& x_prev) const;

 private:
  Matrix A_;
  Matrix Q_;
  Matrix sqrt_q_;
  Matrix precision_;
  double log_norm_ = 0.0;
  bool invertible_ = false;
};

/// Contract every state-space model provides to the filters: per-measurement
/// log-likelihood, its gradient, a global Hessian bound and a Gaussian
/// transition kernel.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual Index state_dim() const = 0;
  virtual Index measurement_dim() const = 0;

  /// log p(z | x) for a single measurement (constants common to every
  /// measurement set of the same size may be dropped).
  virtual double log_lik(MeasurementView z, const StateVector& x) const = 0;

  /// out[j] = log p(batch[indices[j]] | x). Implementations hoist the
  /// x-dependent work out of the measurement loop.
  virtual void log_lik_many(const MeasurementBatch& batch, std::span<const Index> indices,
                            const StateVector& x, std::span<double> out) const;

  virtual double log_lik_sum(const MeasurementBatch& batch, const StateVector& x) const;

  virtual StateVector grad_log_lik(MeasurementView z, const StateVector& x) const = 0;

  /// Column i of `out` is the gradient for measurement i.
  virtual void grad_log_lik_all(const MeasurementBatch& batch, const StateVector& x,
                                Matrix& out) const;

  /// Y >= sup over (z, x) of the spectral norm of the per-measurement Hessian.
  virtual double hessian_bound() const = 0;

  virtual const GaussianTransition& transition() const = 0;

  /// Coordinates the likelihood depends on. Gradient and Hessian vanish
  /// outside this set.
  virtual std::vector<Index> likelihood_dims() const;

  StateVector sample_transition(const StateVector& x_prev, Rng& rng) const;
  double log_transition(const StateVector& x, const StateVector& x_prev) const;

 protected:
  void check_state(const StateVector& x) const;
  void check_measurement(MeasurementView z) const;
};

/// Counts every per-measurement log-likelihood evaluation made against one
/// measurement batch. One instance per chain; never shared across threads.
class BatchLikelihood {
 public:
  BatchLikelihood(const StateSpaceModel& model, const MeasurementBatch& batch);

  const StateSpaceModel& model() const { return *model_; }
  const MeasurementBatch& batch() const { return *batch_; }
  Index size() const { return batch_->size(); }

  double sum(const StateVector& x);
  void eval(std::span<const Index> indices, const StateVector& x, std::span<double> out);
  void gradients(const StateVector& x, Matrix& out);

  std::int64_t likelihood_evals() const { return lik_evals_; }
  std::int64_t gradient_evals() const { return grad_evals_; }

 private:
  const StateSpaceModel* model_;
  const MeasurementBatch* batch_;
  std::int64_t lik_evals_ = 0;
  std::int64_t grad_evals_ = 0;
};

}  // namespace smcmc
