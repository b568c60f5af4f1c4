#include "smcmc/lin_gauss.hpp"

#include <cmath>
#include <numbers>

namespace smcmc {

LinGaussParams LinGaussParams::scalar(double a, double q, double h, double r) {
  LinGaussParams p;
  p.A = Matrix::Constant(1, 1, a);
  p.Q = Matrix::Constant(1, 1, q);
  p.H = Matrix::Constant(1, 1, h);
  p.R_obs = Matrix::Constant(1, 1, r);
  return p;
}

void LinGaussParams::validate() const {
  require(A.rows() == A.cols() && A.rows() > 0, "A must be square");
  require(Q.rows() == A.rows() && Q.cols() == A.cols(), "Q dimension mismatch");
  require(H.cols() == A.rows() && H.rows() > 0, "H dimension mismatch");
  require(R_obs.rows() == H.rows() && R_obs.cols() == H.rows(), "R_obs dimension mismatch");
  Eigen::LLT<Matrix> q(Q);
  Eigen::LLT<Matrix> r(R_obs);
  require(q.info() == Eigen::Success, "Q must be positive definite");
  require(r.info() == Eigen::Success, "R_obs must be positive definite");
}

LinGaussModel::LinGaussModel(LinGaussParams params) : params_(std::move(params)) {
  require(params_.A.rows() == params_.A.cols(), "A must be square");
  require(params_.H.cols() == params_.A.rows(), "H dimension mismatch");
  require(params_.R_obs.rows() == params_.H.rows(), "R_obs dimension mismatch");
  transition_ = GaussianTransition(params_.A, params_.Q);

  Eigen::LLT<Matrix> llt(params_.R_obs);
  require(llt.info() == Eigen::Success, "R_obs must be positive definite");
  const Index nz = measurement_dim();
  r_inv_ = params_.R_obs.inverse();
  r_inv_ = 0.5 * (r_inv_ + r_inv_.transpose());
  r_chol_ = llt.matrixL();
  ht_r_inv_ = params_.H.transpose() * r_inv_;
  const double log_det = 2.0 * r_chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(nz) * std::log(2.0 * std::numbers::pi) + log_det);

  // Per-measurement Hessian is the constant -H^T R^{-1} H.
  const Matrix hess = params_.H.transpose() * r_inv_ * params_.H;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (hess + hess.transpose()));
  hessian_bound_ = eig.eigenvalues().cwiseAbs().maxCoeff();
}

double LinGaussModel::quad_residual(const double* z, const Vector& hx) const {
  const Index nz = hx.size();
  if (nz == 1) {
    const double r = z[0] - hx(0);
    return r * r * r_inv_(0, 0);
  }
  double q = 0.0;
  for (Index a = 0; a < nz; ++a) {
    const double ra = z[a] - hx(a);
    for (Index b = 0; b < nz; ++b) q += ra * r_inv_(a, b) * (z[b] - hx(b));
  }
  return q;
}

double LinGaussModel::log_lik(MeasurementView z, const StateVector& x) const {
  check_measurement(z);
  check_state(x);
  const Vector hx = params_.H * x;
  const Vector zc = z;
  return log_norm_ - 0.5 * quad_residual(zc.data(), hx);
}

void LinGaussModel::log_lik_many(const MeasurementBatch& batch, std::span<const Index> indices,
                                 const StateVector& x, std::span<double> out) const {
  check_state(x);
  require(batch.empty() || batch.dim() == measurement_dim(), "measurement dimension mismatch");
  const Vector hx = params_.H * x;
  const double* data = batch.data().data();
  const Index nz = measurement_dim();
  for (std::size_t j = 0; j < indices.size(); ++j)
    out[j] = log_norm_ - 0.5 * quad_residual(data + indices[j] * nz, hx);
}

double LinGaussModel::log_lik_sum(const MeasurementBatch& batch, const StateVector& x) const {
  check_state(x);
  require(batch.empty() || batch.dim() == measurement_dim(), "measurement dimension mismatch");
  const Vector hx = params_.H * x;
  const double* data = batch.data().data();
  const Index nz = measurement_dim();
  double q = 0.0;
  for (Index i = 0; i < batch.size(); ++i) q += quad_residual(data + i * nz, hx);
  return static_cast<double>(batch.size()) * log_norm_ - 0.5 * q;
}

StateVector LinGaussModel::grad_log_lik(MeasurementView z, const StateVector& x) const {
  check_measurement(z);
  check_state(x);
  return ht_r_inv_ * (z - params_.H * x);
}

void LinGaussModel::grad_log_lik_all(const MeasurementBatch& batch, const StateVector& x,
                                     Matrix& out) const {
  check_state(x);
  const Vector hx = params_.H * x;
  out = ht_r_inv_ * (batch.data().colwise() - hx);
}

MeasurementBatch LinGaussModel::simulate_measurements(const StateVector& x, Index count,
                                                      Rng& rng) const {
  check_state(x);
  const Vector hx = params_.H * x;
  Matrix z(measurement_dim(), count);
  for (Index i = 0; i < count; ++i)
    z.col(i) = hx + r_chol_ * standard_normal_vector(measurement_dim(), rng);
  return MeasurementBatch(std::move(z));
}

}  // namespace smcmc
