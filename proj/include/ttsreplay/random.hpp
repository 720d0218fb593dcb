#pragma once

#include <cstdint>
#include <string_view>

namespace ttsreplay {

/// FNV-1a over the bytes of `text`, finished with a splitmix64 avalanche.
/// Stable across platforms and compilers; used to key permutations.
std::uint64_t stable_hash64(std::string_view text);

/// Order-dependent mix of two 64-bit values.
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

/// splitmix64 generator. The standard distributions are implementation
/// defined, so all draws go through the helpers below to keep synthetic data
/// and permutations bit-identical everywhere.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

 private:
  std::uint64_t state_;
};

}  // namespace ttsreplay
