#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace sdr {

/// SplitMix64 step. Used for seeding and for deriving independent substreams.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256** 1.0 (Blackman & Vigna), seeded from a 64-bit value through
/// SplitMix64. Satisfies UniformRandomBitGenerator so it plugs into <random>
/// distributions, but the simulation code draws through uniform01() so the
/// stream is identical across standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    seed_ = seed;
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  /// Stream for trial `index` of an experiment seeded with `seed`. Streams for
  /// distinct indices are decorrelated by two rounds of SplitMix64 mixing.
  static Rng substream(std::uint64_t seed, std::uint64_t index) noexcept {
    std::uint64_t a = seed;
    std::uint64_t mixed = splitmix64(a);
    std::uint64_t b = mixed ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    return Rng(splitmix64(b));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; safe to pass to log().
  double uniform_open0() noexcept { return 1.0 - uniform01(); }

  /// Bernoulli(p) draw. Consumes exactly one word regardless of p.
  bool bernoulli(double p) noexcept { return uniform01() < p; }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
  std::uint64_t seed_ = 0;
};

}  // namespace sdr
