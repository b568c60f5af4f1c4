#include "smcmc/rng.hpp"

namespace smcmc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (auto id : path) h = splitmix64(h ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

Rng StreamKey::stream(StreamTag tag, std::uint64_t round, std::uint64_t node) const {
  return Rng(derive_seed(master, {run, step, round, node, static_cast<std::uint64_t>(tag)}));
}

Rng fork_without_advance(const Rng& rng, StreamTag tag) {
  Rng copy = rng;
  return Rng(derive_seed(copy(), {static_cast<std::uint64_t>(tag)}));
}

double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double uniform01(Rng& rng) {
  // 53 random bits in [0, 1).
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vector standard_normal_vector(Index n, Rng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = standard_normal(rng);
  return v;
}

std::size_t uniform_index(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

}  // namespace smcmc
