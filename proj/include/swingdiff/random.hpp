#pragma once

#include <cstdint>
#include <random>

namespace swingdiff {

/// Purposes that draw randomness within one trial. Each gets an independent
/// stream derived from the trial seed, so changing how many draws one
/// consumer makes never shifts another.
enum class Stream : std::uint64_t {
  init = 1,
  collocation = 2,
  segments = 3,
  noise = 4,
};

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t trial_seed, Stream stream,
                                    std::uint64_t counter = 0) {
  return mix64(mix64(mix64(trial_seed) ^ static_cast<std::uint64_t>(stream)) + counter);
}

inline std::mt19937_64 make_rng(std::uint64_t trial_seed, Stream stream, std::uint64_t counter = 0) {
  return std::mt19937_64(derive_seed(trial_seed, stream, counter));
}

}  // namespace swingdiff
