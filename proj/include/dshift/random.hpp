#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dshift {

using Rng = std::mt19937_64;

// All randomness in an experiment descends from one integer seed. A component
// stream is seeded with splitmix64(seed ^ fnv1a64(name)); per-item streams
// (image i of a set, epoch e of a run) mix the index in the same way.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Seeded permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace dshift
