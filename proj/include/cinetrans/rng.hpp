#pragma once

#include <cstdint>

namespace cinetrans {

// SplitMix64 run in counter mode. Output i is
//
//   z = seed + (i + 1) * 0x9E3779B97F4A7C15
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   out = z ^ (z >> 31)
//
// which is exactly the sequence produced by the stateful SplitMix64 reference
// seeded with `seed`. Every value is addressable by index, so fixtures can draw
// per-pixel noise without threading generator state through loops, and the
// stream is identical on every platform and in every language that implements
// the three lines above with wrapping 64-bit arithmetic.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit constexpr CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
    return mix(seed_ + (counter + 1) * kGolden);
  }

  // Uniform double in [0, 1) from the top 53 bits of output `counter`.
  constexpr double uniform_at(std::uint64_t counter) const noexcept {
    return static_cast<double>(at(counter) >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t next() noexcept { return at(counter_++); }
  constexpr double uniform() noexcept { return uniform_at(counter_++); }
  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Derives an independent stream for a sub-component (a shot, a block).
  constexpr CounterRng substream(std::uint64_t key) const noexcept {
    return CounterRng(mix(seed_ ^ mix(key + kGolden)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace cinetrans
