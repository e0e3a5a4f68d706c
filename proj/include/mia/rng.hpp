#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mia {

// std::mt19937_64 output is fully specified; the standard distributions are
// not, so conversions to doubles and indices are done here to keep sampled
// results identical across standard libraries.
using Engine = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
inline std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Index of the first cumulative weight exceeding u * total.
inline std::size_t sample_cdf(const std::vector<double>& cdf, double u) {
  const double target = u * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  if (it == cdf.end()) --it;
  return static_cast<std::size_t>(it - cdf.begin());
}

/// Standard normal via Box-Muller over uniform01.
inline double standard_normal(Engine& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Partial Fisher-Yates: first k entries of `items` become a uniform sample.
template <typename T>
void shuffle_prefix(std::vector<T>& items, std::size_t k, Engine& rng) {
  k = std::min(k, items.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_index(rng, items.size() - i);
    std::swap(items[i], items[j]);
  }
}

}  // namespace mia
