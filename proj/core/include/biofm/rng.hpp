#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace biofm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream seed keyed by an ordered tuple, e.g. (seed, epoch, batch, slot).
// Results only depend on the key, never on the order streams are created in.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> keys) { return Rng(derive_seed(keys)); }

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

}  // namespace biofm
