#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace negmine {

/// Independent generator for a named purpose ("init", "folds", "batching",
/// "synthesis", ...) derived from the master seed. `index` separates
/// repeated uses of one purpose (fold number, image number).
std::mt19937_64 substream(std::uint64_t seed, std::string_view name,
                          std::uint64_t index = 0);

/// Uniform draw in [0, 1) built from the raw 53 high bits.
double uniform01(std::mt19937_64& rng);

/// Standard normal via Box-Muller on uniform01.
double standard_normal(std::mt19937_64& rng);

/// Uniform integer in [0, n).
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

}  // namespace negmine
