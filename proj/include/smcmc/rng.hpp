#pragma once

#include "smcmc/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace smcmc {

using Rng = std::mt19937_64;

/// Stream tags used when deriving independent RNG streams.
enum class StreamTag : std::uint64_t {
  kSimulation = 1,
  kInitialParticles = 2,
  kKernel = 3,
  kSubsample = 4,
  kPartition = 5,
  kPredictive = 6,
};

/// Counter-based seed derivation: hashes the master seed together with a
/// path of identifiers (run, step, round, node, stage...) so that every
/// sub-computation owns a reproducible stream.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Identifies one (master seed, run, time step) cell of an experiment.
struct StreamKey {
  std::uint64_t master = 0;
  std::uint64_t run = 0;
  std::uint64_t step = 0;

  Rng stream(StreamTag tag, std::uint64_t round = 0, std::uint64_t node = 0) const;
};

/// A second stream derived from the current state of `rng` without advancing it.
Rng fork_without_advance(const Rng& rng, StreamTag tag);

double standard_normal(Rng& rng);
double uniform01(Rng& rng);
Vector standard_normal_vector(Index n, Rng& rng);
std::size_t uniform_index(std::size_t n, Rng& rng);

}  // namespace smcmc
