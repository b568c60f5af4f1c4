#pragma once

#include "smcmc/kernel.hpp"

#include <cstdint>
#include <vector>

namespace smcmc {

struct SubsampleParams {
  double gamma = 1.2;  // batch growth factor, > 1
  double delta = 0.1;  // total error budget, in (0, 1)
  double p = 2.0;      // delta schedule exponent, > 1

  void validate() const;
};

/// First-order Taylor control variates around an expansion point x+.
/// Proxy for measurement i: g_i^T (to - from), g_i = grad log p(z_i | x+).
class ProxyCache {
 public:
  ProxyCache() = default;
  ProxyCache(StateVector expansion_point, Matrix gradients, double hessian_bound,
             std::vector<Index> likelihood_dims);

  bool empty() const { return expansion_point_.size() == 0; }
  Index size() const { return gradients_.cols(); }
  const StateVector& expansion_point() const { return expansion_point_; }
  const Vector& mean_gradient() const { return mean_gradient_; }
  const Matrix& gradients() const { return gradients_; }

  double eval(Index i, const StateVector& from, const StateVector& to) const;
  /// Mean of eval(i, ...) over all i.
  double mean_eval(const StateVector& from, const StateVector& to) const;
  /// Y * (||from - x+||^2 + ||to - x+||^2), norm over the likelihood coordinates.
  double range_bound(const StateVector& from, const StateVector& to) const;

 private:
  StateVector expansion_point_;
  Matrix gradients_;
  Vector mean_gradient_;
  double hessian_bound_ = 0.0;
  std::vector<Index> dims_;
};

/// Builds the proxy at x+; counts M gradient evaluations on `lik`.
ProxyCache build_proxy(BatchLikelihood& lik, const StateVector& x_plus);

double proxy_eval(const ProxyCache& proxy, Index i, const StateVector& from, const StateVector& to);
double range_bound(const ProxyCache& proxy, const StateVector& from, const StateVector& to);

/// Empirical-Bernstein half-width: sqrt(2 V log(3/delta) / S) + 3 R log(3/delta) / S.
double bernstein_radius(double variance, double range, Index sample_size, double delta);

/// delta_w = (p - 1) / (p w^p) * delta; sums to delta over w >= 1.
double delta_schedule(int w, double p, double delta);

struct SubsampleOutcome {
  bool accept = false;
  double lambda = 0.0;      // proxy-corrected running mean
  double proxy_mean = 0.0;  // mean proxy over the full batch
  Index consumed = 0;       // S
  int loops = 0;            // w
  double radius = 0.0;      // c_S at termination
};

/// Per-chain scratch: the persistent permutation and a cache of
/// log p(z_i | x) at the chain's current x, valid while its stamp matches.
class SubsampleWorkspace {
 public:
  explicit SubsampleWorkspace(Index batch_size = 0);

  void reset(Index batch_size);
  /// Forget all cached values (the chain's x changed without a decision).
  void invalidate() { ++epoch_; }
  Index batch_size() const { return static_cast<Index>(perm_.size()); }

 private:
  friend SubsampleOutcome adaptive_decide(const StateVector&, const StateVector&, BatchLikelihood&,
                                          const ProxyCache&, double, const SubsampleParams&, Rng&,
                                          SubsampleWorkspace*);
  std::vector<Index> perm_;
  std::vector<double> current_;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t epoch_ = 1;
  std::vector<double> to_values_;
  std::vector<double> from_values_;
  std::vector<Index> misses_;
  std::vector<double> miss_values_;
};

/// Adaptive subsampled test of Lambda_M(from, to) > psi. With a workspace,
/// cached values at `from` are reused and the cache follows the decision.
SubsampleOutcome adaptive_decide(const StateVector& from, const StateVector& to, BatchLikelihood& lik,
                                 const ProxyCache& proxy, double psi, const SubsampleParams& params,
                                 Rng& rng, SubsampleWorkspace* workspace = nullptr);

/// Filter step whose data-dependent decisions use adaptive subsampling.
/// The proxy is rebuilt at the chain's current x_k before sweep 1 and sweep N_b.
FilterStepResult as_filter_step(const ParticleApproximation& prev, const MeasurementBatch& batch,
                                const StateSpaceModel& model, const KernelConfig& cfg,
                                const SubsampleParams& params, Rng& rng);

FilterStepResult as_filter_step(const StepTarget& target, const MeasurementBatch& batch,
                                const KernelConfig& cfg, const SubsampleParams& params, Rng& rng,
                                const ChainState* warm_start = nullptr);

}  // namespace smcmc
