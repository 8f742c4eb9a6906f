// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors

#pragma once

#include <cstdint>
#include <random>

namespace ceutrack {

// std::mt19937 output is pinned by the standard, but the std:: distributions
// are not; these mappings keep seeded runs bit-identical across platforms.

/// Uniform float in [0, 1).
inline float uniform_unit(std::mt19937& g) {
  return static_cast<float>(g() >> 8) * (1.0f / 16777216.0f);
}

/// Uniform float in [lo, hi).
inline float uniform_range(std::mt19937& g, float lo, float hi) {
  return lo + (hi - lo) * uniform_unit(g);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit_d(std::mt19937& g) {
  const std::uint64_t hi = g() >> 5;   // 27 bits
  const std::uint64_t lo = g() >> 6;   // 26 bits
  return static_cast<double>((hi << 26) | lo) * (1.0 / 9007199254740992.0);
}

/// Uniform double in [lo, hi).
inline double uniform_range_d(std::mt19937& g, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit_d(g);
}

/// Uniform integer in [0, n).
inline std::uint32_t uniform_index(std::mt19937& g, std::uint32_t n) {
  return static_cast<std::uint32_t>(uniform_unit_d(g) * n);
}

}  // namespace ceutrack
