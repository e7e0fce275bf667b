#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace miladv {

/// Engine used everywhere. mt19937_64 is fully specified by the standard, and
/// the helpers below map its output to values without the implementation
/// defined std:: distributions, so streams are identical across toolchains.
using Rng = std::mt19937_64;

/// Derives an independent seed for a named sub-stream ("data", "init", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Uniform double in [0, 1).
double uniform01(Rng& rng);

/// Uniform double in [lo, hi).
double uniform(Rng& rng, double lo, double hi);

/// Uniform integer in [lo, hi], unbiased.
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

/// Standard normal via Box-Muller (one value per call).
double standard_normal(Rng& rng);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

/// k distinct indices from 0..n-1 in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace miladv
