#pragma once

#include <cstdint>
#include <random>

namespace cslab {

// splitmix64 finalizer. Used to derive independent stream seeds from a base
// seed and a counter, so batch shards can be generated in any order (or
// concurrently) and concatenated without changing results.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

// All randomness in the project flows through explicitly seeded engines;
// there is no global RNG state.
inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace cslab
