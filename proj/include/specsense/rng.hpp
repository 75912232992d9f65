#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace specsense {

/// Counter-based SplitMix64 stream.
///
/// Draw i of a stream is a pure function of (seed, i), so any stream can be
/// reproduced from its seed alone. `substream(key)` derives an independent
/// stream by hashing the key into the seed; this is how per-frame and
/// per-epoch randomness is kept independent of evaluation order.
class RngStream {
 public:
  explicit constexpr RngStream(std::uint64_t seed = 0) noexcept : seed_(seed) {}

  [[nodiscard]] constexpr std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

  [[nodiscard]] constexpr RngStream substream(std::uint64_t key) const noexcept {
    return RngStream(mix(seed_ ^ mix(key + 0x632BE59BD9B4E019ULL)));
  }

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix(seed_ + counter_ * kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe as a log argument.
  double uniform_open() noexcept { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection keeps the draw unbiased.
    while (true) {
      const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  double normal() noexcept {
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    return r * std::cos(2.0 * std::numbers::pi * uniform());
  }

  /// Circularly symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance = 1.0) noexcept {
    const double r = std::sqrt(-variance * std::log(uniform_open()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    return {r * std::cos(theta), r * std::sin(theta)};
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace specsense
