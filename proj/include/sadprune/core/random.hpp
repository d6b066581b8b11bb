#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace sadprune {

using rng_t = std::mt19937_64;

/// Derives an independent stream from a base seed and a stream index (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
void fill_normal(std::span<T> out, rng_t& rng, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : out) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_uniform(std::span<T> out, rng_t& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : out) v = static_cast<T>(dist(rng));
}

}  // namespace sadprune
