#include "smcmc/model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace smcmc {

void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

MeasurementBatch MeasurementBatch::subset(std::span<const Index> indices) const {
  Matrix out(dim(), static_cast<Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    require(indices[j] >= 0 && indices[j] < size(), "measurement index out of range");
    out.col(static_cast<Index>(j)) = data_.col(indices[j]);
  }
  return MeasurementBatch(std::move(out));
}

StateVector ParticleApproximation::mean() const {
  require(!particles.empty(), "mean of an empty particle set");
  StateVector m = StateVector::Zero(particles.front().size());
  for (const auto& p : particles) m += p;
  return m / static_cast<double>(particles.size());
}

std::vector<double> ParticleApproximation::coordinate(Index d) const {
  std::vector<double> out;
  out.reserve(particles.size());
  for (const auto& p : particles) out.push_back(p(d));
  return out;
}

GaussianTransition::GaussianTransition(Matrix A, Matrix Q) : A_(std::move(A)), Q_(std::move(Q)) {
  require(A_.rows() == A_.cols(), "transition matrix must be square");
  require(Q_.rows() == A_.rows() && Q_.cols() == A_.cols(), "process noise dimension mismatch");
  require((Q_ - Q_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + Q_.cwiseAbs().maxCoeff()),
          "process noise must be symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(Q_);
  const Vector& evals = eig.eigenvalues();
  require(evals.minCoeff() >= -1e-12 * (1.0 + evals.cwiseAbs().maxCoeff()),
          "process noise must be positive semidefinite");
  sqrt_q_ = eig.eigenvectors() * evals.cwiseMax(0.0).cwiseSqrt().asDiagonal();

  Eigen::LLT<Matrix> llt(Q_);
  invertible_ = llt.info() == Eigen::Success && evals.minCoeff() > 0.0;
  if (invertible_) {
    precision_ = llt.solve(Matrix::Identity(dim(), dim()));
    precision_ = 0.5 * (precision_ + precision_.transpose());
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norm_ = -0.5 * (static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi) + log_det);
  }
}

const Matrix& GaussianTransition::precision() const {
  require(invertible_, "transition covariance is singular");
  return precision_;
}

StateVector GaussianTransition::sample(const StateVector& x_prev, Rng& rng) const {
  require(x_prev.size() == dim(), "state dimension mismatch");
  return A_ * x_prev + sqrt_q_ * standard_normal_vector(dim(), rng);
}

double GaussianTransition::log_density(const StateVector& x, const StateVector& x_prev) const {
  require(invertible_, "transition covariance is singular");
  require(x.size() == dim() && x_prev.size() == dim(), "state dimension mismatch");
  const Vector r = x - A_ * x_prev;
  return log_norm_ - 0.5 * r.dot(precision_ * r);
}

void StateSpaceModel::log_lik_many(const MeasurementBatch& batch, std::span<const Index> indices,
                                   const StateVector& x, std::span<double> out) const {
  require(out.size() >= indices.size(), "output span too small");
  for (std::size_t j = 0; j < indices.size(); ++j) out[j] = log_lik(batch[indices[j]], x);
}

double StateSpaceModel::log_lik_sum(const MeasurementBatch& batch, const StateVector& x) const {
  std::vector<Index> idx(static_cast<std::size_t>(batch.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::vector<double> vals(idx.size());
  log_lik_many(batch, idx, x, vals);
  double s = 0.0;
  for (double v : vals) s += v;
  return s;
}

void StateSpaceModel::grad_log_lik_all(const MeasurementBatch& batch, const StateVector& x,
                                       Matrix& out) const {
  out.resize(state_dim(), batch.size());
  for (Index i = 0; i < batch.size(); ++i) out.col(i) = grad_log_lik(batch[i], x);
}

std::vector<Index> StateSpaceModel::likelihood_dims() const {
  std::vector<Index> dims(static_cast<std::size_t>(state_dim()));
  std::iota(dims.begin(), dims.end(), Index{0});
  return dims;
}

StateVector StateSpaceModel::sample_transition(const StateVector& x_prev, Rng& rng) const {
  check_state(x_prev);
  return transition().sample(x_prev, rng);
}

double StateSpaceModel::log_transition(const StateVector& x, const StateVector& x_prev) const {
  check_state(x);
  check_state(x_prev);
  return transition().log_density(x, x_prev);
}

void StateSpaceModel::check_state(const StateVector& x) const {
  require(x.size() == state_dim(), "state dimension mismatch");
}

void StateSpaceModel::check_measurement(MeasurementView z) const {
  require(z.size() == measurement_dim(), "measurement dimension mismatch");
}

BatchLikelihood::BatchLikelihood(const StateSpaceModel& model, const MeasurementBatch& batch)
    : model_(&model), batch_(&batch) {
  require(batch.empty() || batch.dim() == model.measurement_dim(),
          "measurement dimension mismatch");
}

double BatchLikelihood::sum(const StateVector& x) {
  lik_evals_ += batch_->size();
  return model_->log_lik_sum(*batch_, x);
}

void BatchLikelihood::eval(std::span<const Index> indices, const StateVector& x,
                           std::span<double> out) {
  lik_evals_ += static_cast<std::int64_t>(indices.size());
  model_->log_lik_many(*batch_, indices, x, out);
}

void BatchLikelihood::gradients(const StateVector& x, Matrix& out) {
  grad_evals_ += batch_->size();
  model_->grad_log_lik_all(*batch_, x, out);
}

}  // namespace smcmc
