#include "smcmc/kernel.hpp"

#include "chain_runner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smcmc {

void KernelConfig::validate(Index state_dim) const {
  require(num_samples >= 1, "kernel.N must be >= 1");
  require(burn_in >= 0, "kernel.N_b must be >= 0");
  require(!stages.empty(), "kernel.stages must not be empty");
  require(std::isfinite(rw_variance) && rw_variance > 0.0, "kernel.sigma_r must be > 0");
  std::vector<int> seen(static_cast<std::size_t>(state_dim), 0);
  for (const auto& block : resolved_blocks(state_dim)) {
    require(!block.empty(), "kernel.blocks: empty block");
    for (Index d : block) {
      require(d >= 0 && d < state_dim, "kernel.blocks: index out of range");
      require(seen[static_cast<std::size_t>(d)]++ == 0, "kernel.blocks: blocks overlap");
    }
  }
  require(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }),
          "kernel.blocks: blocks must cover every state coordinate");
}

std::vector<std::vector<Index>> KernelConfig::resolved_blocks(Index state_dim) const {
  if (!blocks.empty()) return blocks;
  std::vector<Index> all(static_cast<std::size_t>(state_dim));
  for (Index d = 0; d < state_dim; ++d) all[static_cast<std::size_t>(d)] = d;
  return {all};
}

int KernelConfig::data_stages(Index state_dim) const {
  int n = 0;
  const int nb = static_cast<int>(resolved_blocks(state_dim).size());
  for (Stage s : stages) {
    if (s == Stage::kJointDraw) n += 1;
    if (s == Stage::kRefineCurrent) n += nb;
  }
  return n;
}

bool KernelConfig::has_stage(Stage s) const {
  return std::find(stages.begin(), stages.end(), s) != stages.end();
}

StepTarget::StepTarget(const StateSpaceModel& model, const ParticleApproximation& prev,
                       std::optional<GaussianNaturalParams> cavity)
    : model_(&model), prev_(&prev), cavity_(std::move(cavity)) {
  const Index n = model.state_dim();
  require(!prev.empty(), "StepTarget: previous particle set is empty");
  const auto& tr = model.transition();
  if (cavity_) {
    require(cavity_->dim() == n && cavity_->J.rows() == n && cavity_->J.cols() == n,
            "StepTarget: cavity dimension mismatch");
    require(tr.invertible(), "StepTarget: a cavity factor needs an invertible Q");
  }
  if (tr.invertible()) {
    precision_ = tr.precision();
    if (cavity_) precision_ += cavity_->J;
    llt_.compute(precision_);
    require(llt_.info() == Eigen::Success, "StepTarget: prior precision is not positive definite");
    qinv_a_ = tr.precision() * tr.A();
  }
  predicted_.reserve(prev.size());
  for (const auto& p : prev.particles) {
    require(p.size() == n, "StepTarget: particle dimension mismatch");
    predicted_.push_back(tr.A() * p);
  }
}

double StepTarget::transition_quad(const StateVector& x, const Vector& mean) const {
  const Vector r = x - mean;
  return -0.5 * r.dot(model_->transition().precision() * r);
}

double StepTarget::log_prior(const StateVector& x, const StateVector& x_prev) const {
  double v = transition_quad(x, model_->transition().A() * x_prev);
  if (cavity_) v += cavity_->log_factor(x);
  return v;
}

double StepTarget::log_transition(const StateVector& x, const StateVector& x_prev) const {
  return transition_quad(x, model_->transition().A() * x_prev);
}

double StepTarget::log_transition_from_particle(const StateVector& x, std::size_t j) const {
  return transition_quad(x, predicted_[j]);
}

Vector StepTarget::prior_h(const StateVector& x_prev) const {
  Vector h = qinv_a_ * x_prev;
  if (cavity_) h += cavity_->h;
  return h;
}

StateVector StepTarget::sample_prior(const StateVector& x_prev, Rng& rng) const {
  if (!cavity_) return model_->sample_transition(x_prev, rng);
  const Vector mean = llt_.solve(prior_h(x_prev));
  const Vector eps = standard_normal_vector(mean.size(), rng);
  return mean + llt_.matrixU().solve(eps);
}

double StepTarget::log_prior_normaliser(const StateVector& x_prev) const {
  if (!cavity_) return 0.0;
  const Vector h = prior_h(x_prev);
  const Vector ax = model_->transition().A() * x_prev;
  return 0.5 * h.dot(llt_.solve(h)) - 0.5 * ax.dot(model_->transition().precision() * ax);
}

StateVector StepTarget::sample_prior_block(const StateVector& x, const StateVector& x_prev,
                                           std::span<const Index> block, Rng& rng) const {
  const Index n = x.size();
  if (static_cast<Index>(block.size()) == n) return sample_prior(x_prev, rng);
  require(model_->transition().invertible(),
          "prior block proposal on a strict block needs an invertible Q");

  std::vector<char> in_block(static_cast<std::size_t>(n), 0);
  for (Index d : block) in_block[static_cast<std::size_t>(d)] = 1;
  std::vector<Index> rest;
  for (Index d = 0; d < n; ++d)
    if (!in_block[static_cast<std::size_t>(d)]) rest.push_back(d);

  const Vector h = prior_h(x_prev);
  const Index b = static_cast<Index>(block.size());
  Matrix jbb(b, b);
  Vector hb(b);
  for (Index i = 0; i < b; ++i) {
    const Index bi = block[static_cast<std::size_t>(i)];
    hb(i) = h(bi);
    for (Index r : rest) hb(i) -= precision_(bi, r) * x(r);
    for (Index j = 0; j < b; ++j) jbb(i, j) = precision_(bi, block[static_cast<std::size_t>(j)]);
  }
  Eigen::LLT<Matrix> llt(jbb);
  const Vector draw = llt.solve(hb) + llt.matrixU().solve(standard_normal_vector(b, rng));

  StateVector out = x;
  for (Index i = 0; i < b; ++i) out(block[static_cast<std::size_t>(i)]) = draw(i);
  return out;
}

ChainState initial_chain(const StepTarget& target, Rng& rng) {
  ChainState c;
  c.x_prev = target.prev().particles[uniform_index(target.prev().size(), rng)];
  c.x = target.sample_prior(c.x_prev, rng);
  return c;
}

Proposal propose_joint(const ChainState& chain, const StepTarget& target, Rng& rng) {
  Proposal p;
  p.candidate.x_prev = target.prev().particles[uniform_index(target.prev().size(), rng)];
  p.candidate.x = target.sample_prior(p.candidate.x_prev, rng);
  if (target.has_cavity())
    p.log_correction =
        target.log_prior_normaliser(p.candidate.x_prev) - target.log_prior_normaliser(chain.x_prev);
  return p;
}

Proposal propose_block(const ChainState& chain, std::span<const Index> block,
                       const StepTarget& target, const KernelConfig& cfg, Rng& rng) {
  Proposal p;
  p.candidate.x_prev = chain.x_prev;
  if (cfg.current_proposal == CurrentProposal::kPrior) {
    p.candidate.x = target.sample_prior_block(chain.x, chain.x_prev, block, rng);
    return p;
  }
  p.candidate.x = chain.x;
  const double sd = std::sqrt(cfg.rw_variance);
  for (Index d : block) p.candidate.x(d) += sd * standard_normal(rng);
  p.log_correction =
      target.log_prior(p.candidate.x, chain.x_prev) - target.log_prior(chain.x, chain.x_prev);
  return p;
}

bool exact_mh_accept(ChainState& chain, Proposal proposal, BatchLikelihood& lik, Rng& rng) {
  const double log_u = std::log(uniform01(rng));
  if (!chain.log_lik) chain.log_lik = lik.sum(chain.x);
  const double ll_new = lik.sum(proposal.candidate.x);
  if (log_u < ll_new - *chain.log_lik + proposal.log_correction) {
    chain.x = std::move(proposal.candidate.x);
    chain.x_prev = std::move(proposal.candidate.x_prev);
    chain.log_lik = ll_new;
    return true;
  }
  return false;
}

bool joint_draw(ChainState& chain, const StepTarget& target, BatchLikelihood& lik, Rng& rng) {
  return exact_mh_accept(chain, propose_joint(chain, target, rng), lik, rng);
}

RefinePrevOutcome refine_prev(ChainState& chain, const StepTarget& target, PrevProposal proposal,
                              Rng& rng) {
  const auto& prev = target.prev().particles;
  RefinePrevOutcome out;
  if (proposal == PrevProposal::kUniform) {
    const std::size_t j = uniform_index(prev.size(), rng);
    const double log_u = std::log(uniform01(rng));
    const double ratio = target.log_transition_from_particle(chain.x, j) -
                         target.log_transition(chain.x, chain.x_prev);
    if (log_u < ratio) {
      chain.x_prev = prev[j];
      out.accepted = true;
    }
    return out;
  }

  std::vector<double> w(prev.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < prev.size(); ++j) {
    w[j] = target.log_transition_from_particle(chain.x, j);
    top = std::max(top, w[j]);
  }
  out.accepted = true;
  if (!std::isfinite(top)) {
    out.fell_back = true;
    chain.x_prev = prev[uniform_index(prev.size(), rng)];
    return out;
  }
  double total = 0.0;
  for (double& v : w) total += (v = std::exp(v - top));
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t pick = prev.size() - 1;
  for (std::size_t j = 0; j < prev.size(); ++j) {
    acc += w[j];
    if (u < acc) {
      pick = j;
      break;
    }
  }
  chain.x_prev = prev[pick];
  return out;
}

bool refine_current_block(ChainState& chain, std::span<const Index> block, const StepTarget& target,
                          const KernelConfig& cfg, BatchLikelihood& lik, Rng& rng) {
  return exact_mh_accept(chain, propose_block(chain, block, target, cfg, rng), lik, rng);
}

namespace detail {

void validate_step(const StepTarget& target, const MeasurementBatch& batch, const KernelConfig& cfg) {
  const auto& model = target.model();
  cfg.validate(model.state_dim());
  require(batch.empty() || batch.dim() == model.measurement_dim(),
          "measurement dimension does not match the model");
  const bool needs_density =
      cfg.has_stage(Stage::kRefinePrev) ||
      (cfg.has_stage(Stage::kRefineCurrent) && cfg.current_proposal == CurrentProposal::kRandomWalk);
  require(!needs_density || model.transition().invertible(),
          "the configured stages need an invertible transition covariance");
}

}  // namespace detail

FilterStepResult run_filter_step(const ParticleApproximation& prev, const MeasurementBatch& batch,
                                 const StateSpaceModel& model, const KernelConfig& cfg, Rng& rng) {
  const StepTarget target(model, prev);
  return run_filter_step(target, batch, cfg, rng);
}

FilterStepResult run_filter_step(const StepTarget& target, const MeasurementBatch& batch,
                                 const KernelConfig& cfg, Rng& rng, const ChainState* warm_start) {
  detail::validate_step(target, batch, cfg);
  BatchLikelihood lik(target.model(), batch);
  auto decide = [&](ChainState& chain, Proposal p, StepDiagnostics&) {
    return exact_mh_accept(chain, std::move(p), lik, rng);
  };
  auto result = detail::run_chain(target, lik, cfg, rng, warm_start, decide, [](int, const ChainState&) {});
  result.particles.k = target.prev().k + 1;
  return result;
}

}  // namespace smcmc
