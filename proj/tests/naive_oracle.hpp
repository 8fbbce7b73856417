#pragma once

// Test-only reference forward pass. It decodes the MEX1 blob itself (no use
// of parse_model) and evaluates with std::inner_product, so it shares no
// code path with the executor it checks.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace testing_oracle {

inline std::uint32_t rd32(const std::vector<std::uint8_t>& b, std::size_t& at) {
  std::uint32_t v = b.at(at) | (b.at(at + 1) << 8) | (b.at(at + 2) << 16) |
                    (std::uint32_t{b.at(at + 3)} << 24);
  at += 4;
  return v;
}

inline float rdf(const std::vector<std::uint8_t>& b, std::size_t& at) {
  return std::bit_cast<float>(rd32(b, at));
}

/// x is n rows of in_dim features; returns n rows of out_dim.
inline std::vector<float> forward(const std::vector<std::uint8_t>& blob, std::vector<float> x,
                                  std::uint64_t n) {
  struct L {
    std::uint32_t in, out;
    bool relu;
  };
  std::vector<L> ls;
  std::size_t at = 5;
  if (blob.at(4) == 0) return x;
  if (blob.at(4) == 1) {
    const auto in = rd32(blob, at);
    const auto out = rd32(blob, at);
    ls.push_back({in, out, false});
  } else {
    const std::size_t count = blob.at(at++);
    for (std::size_t i = 0; i < count; ++i) {
      const auto in = rd32(blob, at);
      const auto out = rd32(blob, at);
      const bool relu = blob.at(at++) == 1;
      ls.push_back({in, out, relu});
    }
  }
  for (const auto& l : ls) {
    std::vector<float> w(std::size_t{l.in} * l.out), bias(l.out);
    for (auto& v : w) v = rdf(blob, at);
    for (auto& v : bias) v = rdf(blob, at);
    std::vector<float> y(n * l.out);
    for (std::uint64_t r = 0; r < n; ++r) {
      for (std::uint32_t o = 0; o < l.out; ++o) {
        float dot = std::inner_product(w.begin() + std::size_t{o} * l.in,
                                       w.begin() + std::size_t{o + 1} * l.in,
                                       x.begin() + r * l.in, 0.0f);
        float v = dot + bias[o];
        y[r * l.out + o] = l.relu ? std::max(v, 0.0f) : v;
      }
    }
    x.swap(y);
  }
  return x;
}

}  // namespace testing_oracle
