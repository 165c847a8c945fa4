#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace wisynth {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for (seed, stream) pairs.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

/// Uniform in [0, 1) with 53 random bits; identical across standard libraries.
inline double uniform01(Rng& rng) noexcept { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) noexcept {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

/// Draws an index with probability proportional to `weights` (non-negative).
inline std::size_t categorical(std::span<const double> weights, Rng& rng) noexcept {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding left u marginally above the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

inline double log_sum_exp(std::span<const double> xs) noexcept {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// In-place softmax of log weights.
inline void softmax_inplace(std::span<double> xs) noexcept {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  double s = 0.0;
  for (double& x : xs) {
    x = std::exp(x - m);
    s += x;
  }
  for (double& x : xs) x /= s;
}

}  // namespace wisynth
