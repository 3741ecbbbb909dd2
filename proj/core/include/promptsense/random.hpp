#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace promptsense {

/// Mixes a 64-bit value (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a child seed from a parent seed and a sequence of integer keys. Stable across
/// platforms, so substreams can be indexed by (seed, draw index) etc.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept;

/// FNV-1a over bytes, for folding strings into seed derivation.
std::uint64_t hash_bytes(std::string_view bytes) noexcept;

/// Explicitly seeded random stream. Conversions to doubles and bounded integers are done here
/// rather than through <random> distributions, whose algorithms differ between standard
/// libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t draws() const noexcept { return draws_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

}  // namespace promptsense
