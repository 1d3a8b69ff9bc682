#pragma once

#include <cstdint>
#include <random>

namespace miro {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline double normal(Rng& rng, double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0; }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline bool bernoulli(Rng& rng, double p) { return p > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

/// 1 + Geometric(p) with mean `mean` (>= 1); mean 1 always yields 1.
inline int shifted_geometric(Rng& rng, double mean) {
  if (mean <= 1.0) return 1;
  return 1 + std::geometric_distribution<int>(1.0 / mean)(rng);
}

}  // namespace miro
