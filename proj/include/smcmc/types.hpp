#pragma once

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smcmc {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using StateVector = Eigen::VectorXd;
using Measurement = Eigen::VectorXd;
using MeasurementView = Eigen::Ref<const Eigen::VectorXd>;

/// Raised when a caller breaks an operation's precondition (dimension
/// mismatch, out-of-range index, invalid parameter).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The measurement set z_k received at one time step. Measurement i is
/// column i of the underlying matrix.
class MeasurementBatch {
 public:
  MeasurementBatch() = default;
  MeasurementBatch(Index dim, Index count) : data_(Matrix::Zero(dim, count)) {}
  explicit MeasurementBatch(Matrix columns) : data_(std::move(columns)) {}

  Index size() const { return data_.cols(); }
  Index dim() const { return data_.rows(); }
  bool empty() const { return data_.cols() == 0; }

  auto operator[](Index i) const { return data_.col(i); }
  auto operator[](Index i) { return data_.col(i); }

  const Matrix& data() const { return data_; }

  /// Copy of the measurements at `indices`, in that order.
  MeasurementBatch subset(std::span<const Index> indices) const;

 private:
  Matrix data_;
};

/// N unweighted samples approximating a filtering distribution at step k.
struct ParticleApproximation {
  std::vector<StateVector> particles;
  int k = 0;

  std::size_t size() const { return particles.size(); }
  bool empty() const { return particles.empty(); }
  StateVector mean() const;
  /// Values of coordinate `d` across particles.
  std::vector<double> coordinate(Index d) const;
};

void require(bool condition, const std::string& message);

}  // namespace smcmc
