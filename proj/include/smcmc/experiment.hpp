#pragma once

#include "smcmc/config.hpp"
#include "smcmc/kalman.hpp"

#include <json.hpp>

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace smcmc {

/// One CSV row. NaN marks a metric that does not apply.
struct StepRecord {
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

  int run_id = 0;
  int k = 0;
  Algorithm algo = Algorithm::kSmcmc;
  StateVector est_mean;
  double ks_two_sided = kMissing;
  double ks_one_sided = kMissing;
  double rmse = kMissing;
  double acc_joint = kMissing;
  double acc_ref_prev = kMissing;
  double acc_ref_curr = kMissing;
  std::int64_t lik_evals = 0;
  double consumed_frac = kMissing;
  double wall_ms = kMissing;
};

/// Read-only view of one completed filter step, for callers that need more
/// than the CSV row (e.g. the per-node samples of an EP step).
struct StepContext {
  int run_id;
  int k;
  const std::vector<ParticleApproximation>& node_particles;  // one set unless EP
  const StateVector& truth;
  const GaussianBelief* kalman;  // lin_gauss only
  const StepDiagnostics& diagnostics;
  const MeasurementBatch& batch;
};

using StepObserver = std::function<void(const StepContext&)>;

struct ReplicationResult {
  std::vector<StepRecord> rows;
  std::vector<std::string> messages;  // EP message log lines, if enabled
};

/// Simulates one replication and filters it. Deterministic in (cfg.seed, run_id).
ReplicationResult run_replication(const ExperimentConfig& cfg, int run_id,
                                  const StepObserver& observer = {});

std::string csv_header(Index state_dim);
std::string csv_row(const StepRecord& row);

/// Statistics pooled over every row.
nlohmann::json summarize(const ExperimentConfig& cfg, const std::vector<StepRecord>& rows);

/// Runs every replication, writes <out>/steps.csv and optionally
/// <out>/summary.json and <out>/messages.txt. Returns the process exit status.
int run_experiment(const ExperimentConfig& cfg, bool emit_summary,
                   const std::function<void(const std::string&)>& progress = {});

}  // namespace smcmc
