#include "smcmc/kalman.hpp"

#include <cmath>
#include <numbers>

namespace smcmc {

void GaussianBelief::validate() const {
  require(cov.rows() == mean.size() && cov.cols() == mean.size(), "belief dimension mismatch");
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10, "belief covariance not symmetric");
  Eigen::LLT<Matrix> llt(cov);
  require(llt.info() == Eigen::Success, "belief covariance not positive definite");
}

double GaussianBelief::marginal_cdf(Index d, double value) const {
  const double sd = std::sqrt(cov(d, d));
  return 0.5 * std::erfc(-(value - mean(d)) / (sd * std::numbers::sqrt2));
}

GaussianBelief kalman_predict(const GaussianBelief& belief, const LinGaussParams& params) {
  GaussianBelief out;
  out.mean = params.A * belief.mean;
  out.cov = params.A * belief.cov * params.A.transpose() + params.Q;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

GaussianBelief kalman_step(const GaussianBelief& belief, const LinGaussParams& params,
                           const MeasurementBatch& batch) {
  belief.validate();
  GaussianBelief out = kalman_predict(belief, params);
  const Index n = out.mean.size();
  const Matrix& H = params.H;
  const Matrix& R = params.R_obs;
  for (Index i = 0; i < batch.size(); ++i) {
    const Matrix S = H * out.cov * H.transpose() + R;
    const Matrix K = out.cov * H.transpose() * S.inverse();
    out.mean += K * (batch[i] - H * out.mean);
    // Joseph form keeps the covariance symmetric positive definite.
    const Matrix I_KH = Matrix::Identity(n, n) - K * H;
    out.cov = I_KH * out.cov * I_KH.transpose() + K * R * K.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose());
  }
  return out;
}

}  // namespace smcmc
