#pragma once

// Platform-stable random helpers. The standard distributions are
// implementation-defined, so everything here is built directly on the
// (fully specified) mt19937_64 output stream.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace groundguide {

using Rng = std::mt19937_64;

// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

// Stable 64-bit mix of a base seed and a key (FNV-1a over the key, then
// splitmix64 finalization).
std::uint64_t mix_seed(std::uint64_t seed, std::string_view key);

template <typename T>
void stable_shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

// Seeded choice of `count` indices out of [0, total), returned in ascending
// order. count >= total returns every index.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t count,
                                        std::uint64_t seed);

}  // namespace groundguide
