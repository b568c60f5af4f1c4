#pragma once

#include "smcmc/metrics.hpp"
#include "smcmc/model.hpp"
#include "smcmc/natural_params.hpp"

#include <optional>
#include <span>
#include <vector>

namespace smcmc {

enum class Stage { kJointDraw, kRefinePrev, kRefineCurrent };

/// How x_{k-1} is refined given x_k.
enum class PrevProposal {
  kGibbs,    // exact conditional over the previous particles; always accepted
  kUniform,  // uniform particle index, MH with the ratio of transition densities
};

/// How a block of x_k is refined given x_{k-1}.
enum class CurrentProposal {
  kPrior,       // conditional prior (times cavity); acceptance is the likelihood ratio
  kRandomWalk,  // N(x_k(block), rw_variance * I)
};

struct KernelConfig {
  int num_samples = 1000;  // N
  int burn_in = 100;       // N_b
  std::vector<Stage> stages{Stage::kJointDraw, Stage::kRefinePrev, Stage::kRefineCurrent};
  /// Disjoint blocks covering every state coordinate; empty means one block.
  std::vector<std::vector<Index>> blocks;
  PrevProposal prev_proposal = PrevProposal::kGibbs;
  CurrentProposal current_proposal = CurrentProposal::kPrior;
  double rw_variance = 0.01;

  void validate(Index state_dim) const;
  std::vector<std::vector<Index>> resolved_blocks(Index state_dim) const;
  /// Number of MH decisions per sweep that evaluate the measurements.
  int data_stages(Index state_dim) const;
  bool has_stage(Stage s) const;
};

/// The pair (x_k, x_{k-1}) held by a chain, with the cached total
/// log-likelihood of x_k when known.
struct ChainState {
  StateVector x;
  StateVector x_prev;
  std::optional<double> log_lik;
};

/// Everything held fixed while one chain targets
///   p(z | x_k) p(x_k | x_{k-1}) p_hat(x_{k-1}) prod_i pi(x_k | eta_i)
/// at one time step. The cavity factor is empty for plain filtering.
class StepTarget {
 public:
  StepTarget(const StateSpaceModel& model, const ParticleApproximation& prev,
             std::optional<GaussianNaturalParams> cavity = std::nullopt);

  const StateSpaceModel& model() const { return *model_; }
  const ParticleApproximation& prev() const { return *prev_; }
  bool has_cavity() const { return cavity_.has_value(); }
  const GaussianNaturalParams& cavity() const { return *cavity_; }

  /// log p(x | x_prev) + cavity(x), up to a constant.
  double log_prior(const StateVector& x, const StateVector& x_prev) const;
  /// log p(x | x_prev) up to a constant.
  double log_transition(const StateVector& x, const StateVector& x_prev) const;
  /// log p(x | prev particle j) up to the same constant.
  double log_transition_from_particle(const StateVector& x, std::size_t j) const;

  /// Draw from the normalised product p(x | x_prev) * cavity(x).
  StateVector sample_prior(const StateVector& x_prev, Rng& rng) const;
  /// log of the normaliser of p(x | x_prev) * cavity(x), up to a constant; 0 without cavity.
  double log_prior_normaliser(const StateVector& x_prev) const;
  /// Draw x(block) from the prior conditional given the rest of x.
  StateVector sample_prior_block(const StateVector& x, const StateVector& x_prev,
                                 std::span<const Index> block, Rng& rng) const;

 private:
  Vector prior_h(const StateVector& x_prev) const;
  double transition_quad(const StateVector& x, const Vector& mean) const;

  const StateSpaceModel* model_;
  const ParticleApproximation* prev_;
  std::optional<GaussianNaturalParams> cavity_;
  Matrix precision_;       // Q^-1 + J_cavity
  Eigen::LLT<Matrix> llt_;
  Matrix qinv_a_;          // Q^-1 A
  std::vector<Vector> predicted_;  // A x_{k-1}^(j)
};

/// A proposed chain state and the non-likelihood part of the log MH ratio:
/// log[pi_rest(x*) q(x | x*)] - log[pi_rest(x) q(x* | x)].
struct Proposal {
  ChainState candidate;
  double log_correction = 0.0;
};

/// Uniform chain start: a uniform previous particle and one prior draw.
ChainState initial_chain(const StepTarget& target, Rng& rng);

Proposal propose_joint(const ChainState& chain, const StepTarget& target, Rng& rng);
Proposal propose_block(const ChainState& chain, std::span<const Index> block,
                       const StepTarget& target, const KernelConfig& cfg, Rng& rng);

/// Exact MH decision over the full batch; updates `chain` on acceptance.
/// Draws exactly one uniform from `rng`.
bool exact_mh_accept(ChainState& chain, Proposal proposal, BatchLikelihood& lik, Rng& rng);

/// Joint draw of (x_k, x_{k-1}) with q1 = prior * empirical prior.
bool joint_draw(ChainState& chain, const StepTarget& target, BatchLikelihood& lik, Rng& rng);

struct RefinePrevOutcome {
  bool accepted = false;
  bool fell_back = false;  // Gibbs weights all vanished; a uniform draw was used
};

/// Data-free refinement of x_{k-1} given x_k.
RefinePrevOutcome refine_prev(ChainState& chain, const StepTarget& target, PrevProposal proposal,
                              Rng& rng);

bool refine_current_block(ChainState& chain, std::span<const Index> block, const StepTarget& target,
                          const KernelConfig& cfg, BatchLikelihood& lik, Rng& rng);

struct FilterStepResult {
  ParticleApproximation particles;
  StepDiagnostics diagnostics;
  ChainState last;
};

/// One time step of the composite-kernel filter: N + N_b sweeps over the
/// configured stages, burn-in discarded, N retained x_k values.
FilterStepResult run_filter_step(const ParticleApproximation& prev, const MeasurementBatch& batch,
                                 const StateSpaceModel& model, const KernelConfig& cfg, Rng& rng);

/// Same, against an explicit target (e.g. with a cavity factor), optionally
/// continuing from a previous chain state.
FilterStepResult run_filter_step(const StepTarget& target, const MeasurementBatch& batch,
                                 const KernelConfig& cfg, Rng& rng,
                                 const ChainState* warm_start = nullptr);

}  // namespace smcmc
