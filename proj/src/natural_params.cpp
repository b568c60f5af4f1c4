#include "smcmc/natural_params.hpp"

#include <algorithm>
#include <cmath>

namespace smcmc {

GaussianNaturalParams GaussianNaturalParams::zero(Index dim) {
  return {Vector::Zero(dim), Matrix::Zero(dim, dim)};
}

GaussianNaturalParams GaussianNaturalParams::from_moments(const Vector& mean, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw DegenerateFit("covariance is not positive definite");
  Matrix J = llt.solve(Matrix::Identity(cov.rows(), cov.cols()));
  J = 0.5 * (J + J.transpose());
  return {J * mean, J};
}

bool GaussianNaturalParams::is_zero() const {
  return h.isZero(0.0) && J.isZero(0.0);
}

GaussianNaturalParams& GaussianNaturalParams::operator+=(const GaussianNaturalParams& other) {
  require(other.dim() == dim(), "natural parameter dimension mismatch");
  h += other.h;
  J += other.J;
  return *this;
}

GaussianNaturalParams& GaussianNaturalParams::operator-=(const GaussianNaturalParams& other) {
  require(other.dim() == dim(), "natural parameter dimension mismatch");
  h -= other.h;
  J -= other.J;
  return *this;
}

Matrix pd_projection(const Matrix& J, double eps) {
  require(J.rows() == J.cols(), "pd_projection needs a square matrix");
  const double scale = 1.0 + J.cwiseAbs().maxCoeff();
  require((J - J.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
          "pd_projection needs a symmetric matrix");
  require(eps > 0.0, "pd floor must be positive");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (J + J.transpose()));
  const Vector& ev = eig.eigenvalues();
  if (ev.minCoeff() >= eps) return J;
  const Matrix& V = eig.eigenvectors();
  Matrix out = V * ev.cwiseMax(eps).asDiagonal() * V.transpose();
  return 0.5 * (out + out.transpose());
}

double relative_pd_floor(const Matrix& J, double rel) {
  constexpr double kMinFloor = 1e-12;
  if (J.rows() == 0) return kMinFloor;
  return std::max(rel * J.trace() / static_cast<double>(J.rows()), kMinFloor);
}

GaussianNaturalParams np_from_samples(std::span<const StateVector> samples, double eps) {
  if (samples.empty()) throw DegenerateFit("no samples to fit");
  const Index n = samples.front().size();
  if (static_cast<Index>(samples.size()) < n + 1)
    throw DegenerateFit("need at least dim + 1 samples for a covariance fit");

  Vector mean = Vector::Zero(n);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Matrix cov = Matrix::Zero(n, n);
  for (const auto& s : samples) {
    const Vector d = s - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(samples.size() - 1);
  cov = 0.5 * (cov + cov.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300)))
    throw DegenerateFit("sample covariance is singular");
  Matrix J = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  J = pd_projection(0.5 * (J + J.transpose()), eps);
  return {J * mean, J};
}

GaussianNaturalParams cavity_np_update(const GaussianNaturalParams& posterior,
                                       const GaussianNaturalParams& predictive,
                                       std::span<const GaussianNaturalParams> received,
                                       std::span<const Index> masked_dims, double pd_floor_rel) {
  GaussianNaturalParams eta = posterior - predictive;
  for (const auto& r : received) eta -= r;
  const Index n = eta.dim();

  std::vector<bool> masked(static_cast<std::size_t>(n), false);
  for (Index d : masked_dims) {
    require(d >= 0 && d < n, "masked dimension out of range");
    masked[static_cast<std::size_t>(d)] = true;
  }
  std::vector<Index> keep;
  for (Index d = 0; d < n; ++d)
    if (!masked[static_cast<std::size_t>(d)]) keep.push_back(d);

  GaussianNaturalParams out = GaussianNaturalParams::zero(n);
  if (keep.empty()) return out;
  const Index m = static_cast<Index>(keep.size());
  Matrix sub(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) sub(a, b) = eta.J(keep[a], keep[b]);
  sub = 0.5 * (sub + sub.transpose());
  sub = pd_projection(sub, relative_pd_floor(sub, pd_floor_rel));
  for (Index a = 0; a < m; ++a) {
    out.h(keep[a]) = eta.h(keep[a]);
    for (Index b = 0; b < m; ++b) out.J(keep[a], keep[b]) = sub(a, b);
  }
  return out;
}

GaussianNaturalParams transition_np(const GaussianTransition& transition, const StateVector& x_prev) {
  const Matrix& P = transition.precision();
  return {P * transition.mean(x_prev), P};
}

GaussianNaturalParams cavity_proposal_np(const GaussianNaturalParams& transition,
                                         std::span<const GaussianNaturalParams> received) {
  GaussianNaturalParams eta = transition;
  for (const auto& r : received) eta += r;
  return eta;
}

GaussianMoments to_moments(const GaussianNaturalParams& eta) {
  Eigen::LLT<Matrix> llt(eta.J);
  if (llt.info() != Eigen::Success) throw DegenerateFit("precision is not positive definite");
  Matrix cov = llt.solve(Matrix::Identity(eta.dim(), eta.dim()));
  cov = 0.5 * (cov + cov.transpose());
  return {llt.solve(eta.h), cov};
}

}  // namespace smcmc
