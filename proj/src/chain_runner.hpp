#pragma once

// Shared sweep loop for the exact and subsampled kernels.

#include "smcmc/kernel.hpp"

#include <chrono>

namespace smcmc::detail {

/// `decide(chain, proposal, diag)` makes one data-dependent MH decision and
/// updates the chain on acceptance. `before_sweep(m, chain)` runs ahead of
/// sweep m (1-based).
template <class Decide, class BeforeSweep>
FilterStepResult run_chain(const StepTarget& target, BatchLikelihood& lik, const KernelConfig& cfg,
                           Rng& rng, const ChainState* warm_start, Decide&& decide,
                           BeforeSweep&& before_sweep) {
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = target.model().state_dim();
  const auto blocks = cfg.resolved_blocks(n);

  FilterStepResult result;
  StepDiagnostics& diag = result.diagnostics;
  ChainState chain = warm_start ? *warm_start : initial_chain(target, rng);

  const int total = cfg.burn_in + cfg.num_samples;
  result.particles.particles.reserve(static_cast<std::size_t>(cfg.num_samples));
  for (int m = 1; m <= total; ++m) {
    before_sweep(m, chain);
    for (Stage stage : cfg.stages) {
      switch (stage) {
        case Stage::kJointDraw:
          diag.joint.record(decide(chain, propose_joint(chain, target, rng), diag));
          break;
        case Stage::kRefinePrev: {
          const auto out = refine_prev(chain, target, cfg.prev_proposal, rng);
          diag.refine_prev.record(out.accepted);
          if (out.fell_back) ++diag.prev_fallbacks;
          break;
        }
        case Stage::kRefineCurrent:
          for (const auto& block : blocks)
            diag.refine_current.record(decide(chain, propose_block(chain, block, target, cfg, rng), diag));
          break;
      }
    }
    if (m > cfg.burn_in) result.particles.particles.push_back(chain.x);
  }

  diag.likelihood_evals = lik.likelihood_evals();
  diag.gradient_evals = lik.gradient_evals();
  diag.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  result.last = std::move(chain);
  return result;
}

void validate_step(const StepTarget& target, const MeasurementBatch& batch, const KernelConfig& cfg);

}  // namespace smcmc::detail
