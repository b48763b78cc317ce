#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace crl {

// Stateless helpers on top of mt19937_64. All randomness in the project goes
// through these so that a (seed, build) pair reproduces runs bit-for-bit,
// independent of libstdc++ distribution internals.

inline double rand_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double rand_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_uniform(rng);
}

inline std::size_t rand_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rand_uniform(rng) * static_cast<double>(n)) % n;
}

// Box-Muller, one draw per call (the sine partner is discarded).
inline double rand_gaussian(std::mt19937_64& rng) {
  double u1 = rand_uniform(rng);
  double u2 = rand_uniform(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// SplitMix64 step, used to derive independent stream seeds.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace crl
