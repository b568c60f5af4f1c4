#pragma once

#include "smcmc/model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace smcmc {

/// Multiple targets with near-constant-velocity motion, observed through
/// Poisson point measurements in uniform Poisson clutter.
///
/// State layout: [x_1..x_NT, y_1..y_NT, vx_1..vx_NT, vy_1..vy_NT].
struct MttParams {
  int num_targets = 3;
  double sampling_interval = 1.0;   // T_s
  double motion_noise_std = 0.5;    // sigma_x
  Eigen::Matrix2d meas_cov = Eigen::Matrix2d::Identity();
  double target_rate = 1500.0;      // lambda_X, mean measurements per target
  double clutter_rate = 4000.0;     // lambda_C, mean clutter count
  double region_x = 200.0;          // R_x, clutter region centred on the origin
  double region_y = 200.0;          // R_y

  double clutter_area() const { return region_x * region_y; }
  Index state_dim() const { return 4 * num_targets; }
  void validate() const;

  Index pos_x(int target) const { return target; }
  Index pos_y(int target) const { return num_targets + target; }
  Index vel_x(int target) const { return 2 * num_targets + target; }
  Index vel_y(int target) const { return 3 * num_targets + target; }
};

/// Per-target position (2-vector) for every target in state `x`.
std::vector<Eigen::Vector2d> target_positions(const MttParams& params, const StateVector& x);

/// Position-block Hessian of the per-measurement log-likelihood, with the
/// 2x2 block for target l at rows/cols [2l, 2l+1].
Matrix mtt_hessian(const MttParams& params, const Eigen::Vector2d& z,
                   const std::vector<Eigen::Vector2d>& positions);

class MttModel final : public StateSpaceModel {
 public:
  explicit MttModel(MttParams params);

  const MttParams& params() const { return params_; }

  Index state_dim() const override { return params_.state_dim(); }
  Index measurement_dim() const override { return 2; }

  /// log(lambda_C / A_c + lambda_X sum_j N(z; p_j, Sigma)). The factor
  /// exp(-mu_k) / M_k! is dropped; it cancels in every likelihood ratio.
  double log_lik(MeasurementView z, const StateVector& x) const override;
  void log_lik_many(const MeasurementBatch& batch, std::span<const Index> indices,
                    const StateVector& x, std::span<double> out) const override;
  double log_lik_sum(const MeasurementBatch& batch, const StateVector& x) const override;
  StateVector grad_log_lik(MeasurementView z, const StateVector& x) const override;
  void grad_log_lik_all(const MeasurementBatch& batch, const StateVector& x,
                        Matrix& out) const override;
  double hessian_bound() const override { return hessian_bound_; }
  const GaussianTransition& transition() const override { return transition_; }
  std::vector<Index> likelihood_dims() const override;

  /// Responsibility-style weights w_j = lambda_X N_j / (c + lambda_X sum N) for one measurement.
  void mixture_weights(double zx, double zy, const double* px, const double* py, double* w) const;

 private:
  double log_lik_raw(double zx, double zy, const double* px, const double* py) const;

  MttParams params_;
  GaussianTransition transition_;
  Eigen::Matrix2d cov_inv_;
  double log_clutter_ = 0.0;      // log(lambda_C / A_c), -inf if no clutter
  double log_target_norm_ = 0.0;  // log(lambda_X / (2 pi sqrt|Sigma|)), -inf if lambda_X = 0
  double hessian_bound_ = 0.0;
};

/// Offline Hessian bound: 1.1 * (lambda_max(Sigma^-1) w(0) + max_d w(d) ||Sigma^-1 d||^2),
/// with the max over a displacement grid in [-6s, 6s]^2, s = sqrt(lambda_max(Sigma)),
/// refined locally around the best grid cell.
double mtt_hessian_bound(const MttParams& params);

/// Ground truth and measurements produced by `mtt_simulate`.
struct MttScenario {
  std::vector<StateVector> truth;            // truth[0] is the initial state, truth[k] for k = 1..T
  std::vector<MeasurementBatch> batches;     // batches[k - 1] holds z_k
  std::vector<std::vector<int>> origins;     // target index per measurement, -1 for clutter
};

/// Initial target states: positions uniform in the central quarter of the
/// clutter region, velocities uniform in [-1, 1] per axis.
StateVector mtt_initial_state(const MttParams& params, Rng& rng);

MttScenario mtt_simulate(const MttParams& params, int steps, Rng& rng);

/// Simulation from a given initial state.
MttScenario mtt_simulate_from(const MttParams& params, const StateVector& initial, int steps,
                              Rng& rng);

}  // namespace smcmc
