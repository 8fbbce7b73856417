#pragma once

#include <cstdint>

namespace isf {

/// splitmix64 stream. Used for model weights and producer payloads so that
/// any process (or language) can regenerate the same bytes from a seed.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [-1, 1) with 24 bits of resolution; exact in f32.
  constexpr float uniform_pm1() noexcept {
    const auto bits = static_cast<std::uint32_t>(next() >> 40);
    return static_cast<float>(bits) * (1.0f / 8388608.0f) - 1.0f;
  }

 private:
  std::uint64_t state_;
};

/// Mixes several integers into one seed (one splitmix64 step per word).
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) noexcept {
  SplitMix64 g(a);
  std::uint64_t h = g.next() ^ b;
  SplitMix64 g2(h);
  h = g2.next() ^ c;
  return SplitMix64(h).next();
}

}  // namespace isf
