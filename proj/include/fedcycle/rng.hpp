#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace fedcycle {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// SplitMix64 finalizer; the basis of all seeding in the project.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

/// Folds `value` into `seed`, producing a new independent stream seed.
constexpr std::uint64_t seed_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ (mix64(value) + kGolden + (seed << 6) + (seed >> 2)));
}

template <typename... Rest>
constexpr std::uint64_t seed_combine(std::uint64_t seed, std::uint64_t value,
                                     Rest... rest) {
  return seed_combine(seed_combine(seed, value), rest...);
}

// Stream tags keep subsystem seeds derived from one master seed independent.
namespace seed_tag {
inline constexpr std::uint64_t kData = 0x01;
inline constexpr std::uint64_t kSplit = 0x02;
inline constexpr std::uint64_t kSkew = 0x03;
inline constexpr std::uint64_t kInit = 0x04;
inline constexpr std::uint64_t kServer = 0x05;
inline constexpr std::uint64_t kEpochs = 0x06;
inline constexpr std::uint64_t kShuffle = 0x07;
inline constexpr std::uint64_t kRepeat = 0x08;
inline constexpr std::uint64_t kCenters = 0x09;
inline constexpr std::uint64_t kSamples = 0x0A;
inline constexpr std::uint64_t kPool = 0x0B;
inline constexpr std::uint64_t kAssign = 0x0C;
}  // namespace seed_tag

/// Deterministic counter-based generator (SplitMix64 stream). Unlike the
/// standard <random> distributions, every draw here is bit-reproducible
/// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed + kGolden)) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix64(state_);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi], inclusive. Requires lo <= hi.
  int next_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<int>(static_cast<std::uint64_t>(wide >> 64));
  }

  /// Standard normal via Box-Muller (two uniforms per draw, no cached state).
  double next_normal() {
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(next_int(0, static_cast<int>(i - 1)))]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace fedcycle
