#pragma once

#include "smcmc/kernel.hpp"
#include "smcmc/natural_params.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace smcmc {

struct EpConfig {
  int nodes = 4;        // D
  int rounds = 2;       // L
  int num_samples = 500;  // per-node N
  int burn_in = 50;       // per-node N_b
  double pd_floor_rel = 1e-8;
  bool parallel = true;

  void validate() const;
};

/// Random balanced split of {0, ..., M-1} into D disjoint shards whose sizes
/// differ by at most one.
std::vector<std::vector<Index>> partition_indices(Index batch_size, int nodes, Rng& rng);
std::vector<MeasurementBatch> partition_measurements(const MeasurementBatch& batch, int nodes, Rng& rng);

/// One message as logged for replay: dimension header, h flat, J as its
/// row-major lower triangle.
struct MessageRecord {
  int k = 0;
  int round = 0;
  int node = 0;
  GaussianNaturalParams eta;
};

std::string format_message(const MessageRecord& record);
MessageRecord parse_message(std::string_view line);

struct EpStepResult {
  std::vector<ParticleApproximation> node_particles;
  StateVector pooled_mean;
  /// Acceptance counters from the final round; evaluation counts and wall
  /// time summed over every round and node.
  StepDiagnostics diagnostics;
  std::vector<MessageRecord> messages;
};

/// One time step of EP-SMCMC. Node d filters its own previous particle set
/// against its shard, the transition and the product of the other nodes'
/// messages; messages start flat and are exchanged after each round. The
/// RNG stream of node d in round l is derived from (key, l, d).
EpStepResult ep_filter_step(const std::vector<ParticleApproximation>& prev_per_node,
                            const MeasurementBatch& batch, const StateSpaceModel& model,
                            const EpConfig& ep, const KernelConfig& kernel, const StreamKey& key);

}  // namespace smcmc
