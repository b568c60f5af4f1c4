#pragma once

#include "smcmc/model.hpp"
#include "smcmc/types.hpp"

#include <span>
#include <stdexcept>

namespace smcmc {

/// Natural parameters of a (possibly unnormalised) Gaussian factor
/// exp(h^T x - x^T J x / 2): h = Sigma^-1 mu, J = Sigma^-1.
struct GaussianNaturalParams {
  Vector h;
  Matrix J;

  static GaussianNaturalParams zero(Index dim);
  static GaussianNaturalParams from_moments(const Vector& mean, const Matrix& cov);

  Index dim() const { return h.size(); }
  bool is_zero() const;
  double log_factor(const StateVector& x) const { return h.dot(x) - 0.5 * x.dot(J * x); }

  GaussianNaturalParams& operator+=(const GaussianNaturalParams& other);
  GaussianNaturalParams& operator-=(const GaussianNaturalParams& other);
  friend GaussianNaturalParams operator+(GaussianNaturalParams a, const GaussianNaturalParams& b) { return a += b; }
  friend GaussianNaturalParams operator-(GaussianNaturalParams a, const GaussianNaturalParams& b) { return a -= b; }
};

struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

class DegenerateFit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigenvalue floor: V diag(max(lambda, eps)) V^T. Requires a symmetric input.
Matrix pd_projection(const Matrix& J, double eps);

/// eps = rel * trace(J) / n, clamped to a small positive minimum.
double relative_pd_floor(const Matrix& J, double rel);

/// Unbiased mean/covariance fit converted to natural parameters, with the
/// precision projected onto the PD cone using floor `eps`. Needs at least
/// dim + 1 samples and a nonsingular sample covariance.
GaussianNaturalParams np_from_samples(std::span<const StateVector> samples, double eps);

/// eta_d = eta_post - (eta_pred + sum_i received_i). Entries of h and
/// rows/cols of J in `masked_dims` are zero; the remaining block is projected
/// onto the PD cone with floor rel * trace / n.
GaussianNaturalParams cavity_np_update(const GaussianNaturalParams& posterior,
                                       const GaussianNaturalParams& predictive,
                                       std::span<const GaussianNaturalParams> received,
                                       std::span<const Index> masked_dims, double pd_floor_rel);

/// Natural parameters of the transition density as a function of x_k:
/// h = Q^-1 A x_prev, J = Q^-1.
GaussianNaturalParams transition_np(const GaussianTransition& transition, const StateVector& x_prev);

/// eta_q = eta_transition + sum_i received_i.
GaussianNaturalParams cavity_proposal_np(const GaussianNaturalParams& transition,
                                         std::span<const GaussianNaturalParams> received);

/// Throws DegenerateFit if J is not positive definite.
GaussianMoments to_moments(const GaussianNaturalParams& eta);

}  // namespace smcmc
