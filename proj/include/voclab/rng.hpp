#pragma once

// Portable seeded generators. Every random decision in the toolkit (shuffles,
// sampling, weight init, bootstrap) goes through these so results are
// identical across platforms and standard libraries.

#include <cstdint>
#include <span>
#include <utility>

namespace voclab {

/// SplitMix64 (Steele, Lea, Flood 2014). Used for seeding and stream derivation.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// xoshiro256** 1.0 (Blackman, Vigna). State is filled from SplitMix64(seed).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;
  /// Direct state construction, for reference-vector checks.
  static Rng from_state(std::uint64_t s0, std::uint64_t s1, std::uint64_t s2, std::uint64_t s3) noexcept;

  std::uint64_t next() noexcept;

  /// Uniform integer in [0, bound) without modulo bias. bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound) noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept;

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (one value per call; the pair's second is discarded).
  double normal() noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  Rng() = default;
  std::uint64_t s_[4]{};
};

/// Seed for an independent substream, derived from (seed, stream index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace voclab
