#pragma once

#include "smcmc/ep.hpp"
#include "smcmc/kernel.hpp"
#include "smcmc/lin_gauss.hpp"
#include "smcmc/mtt.hpp"
#include "smcmc/subsample.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smcmc {

enum class ModelKind { kLinGauss, kMtt };
enum class Algorithm { kSmcmc, kAsSmcmc, kEpSmcmc };

std::string_view algorithm_name(Algorithm a);
std::string_view model_name(ModelKind m);
/// Accepts both `as-smcmc` and `as_smcmc` spellings.
Algorithm parse_algorithm(std::string_view text);

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::kLinGauss;
  Algorithm algorithm = Algorithm::kSmcmc;

  LinGaussParams lin_gauss = LinGaussParams::scalar();
  double lin_gauss_init_mean = 0.0;
  double lin_gauss_init_var = 1.0;

  MttParams mtt;
  double mtt_init_std = 1.0;

  KernelConfig kernel;
  SubsampleParams subsample;
  EpConfig ep;
  bool log_messages = false;

  int T = 20;
  Index M = 500;  // measurements per step (lin_gauss)
  int runs = 50;
  std::uint64_t seed = 1;
  std::string out = "out";
  int threads = 0;  // replications in flight; 0 = hardware concurrency
  bool timing = false;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Paper defaults for the given model.
ExperimentConfig default_config(ModelKind model);

/// Flat `section.key = value` document; `#` starts a comment. `model` is
/// required, every other key falls back to default_config(model).
ExperimentConfig parse_config(std::string_view text);

ExperimentConfig load_config(const std::string& path);

}  // namespace smcmc
