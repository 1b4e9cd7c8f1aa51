#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. 2011).
//
// Every random quantity in the library is a pure function of a 64-bit key
// and a 128-bit counter, so a value can be regenerated in isolation and the
// result never depends on evaluation order or thread count. Normal variates
// use the Box-Muller transform on two 53-bit uniforms; both the cosine and
// sine branches are used, so one block yields two normals.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace discovery::rng {

using Counter = std::array<std::uint32_t, 4>;

struct Key {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;

  static constexpr Key from(std::uint64_t seed) {
    return Key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }
};

constexpr Counter philox4x32(Counter ctr, Key key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key.lo, lo1, hi0 ^ ctr[3] ^ key.hi, lo0};
    key.lo += kWeyl0;
    key.hi += kWeyl1;
  }
  return ctr;
}

// SplitMix64 finalizer; used to derive independent keys from (seed, index).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index + 0x632BE59BD9B4E019ull));
}

// Uniform on [0, 1) with 53 bits of resolution.
constexpr double unit_open_right(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

// Uniform on (0, 1].
constexpr double unit_open_left(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
  return static_cast<double>(bits + 1) * 0x1.0p-53;
}

struct NormalPair {
  double first;
  double second;
};

inline NormalPair box_muller(const Counter& block) {
  const double u1 = unit_open_left(block[0], block[1]);
  const double u2 = unit_open_right(block[2], block[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

inline NormalPair normal_pair(Counter ctr, Key key) { return box_muller(philox4x32(ctr, key)); }

// Domain tags occupy the last counter word so streams for different purposes
// never collide under one key.
namespace tag {
inline constexpr std::uint32_t kBootstrap = 0xB0057u;
inline constexpr std::uint32_t kSplit = 0x5B117u;
inline constexpr std::uint32_t kSimTreatment = 0x51A01u;
inline constexpr std::uint32_t kSimFactor = 0x51A02u;
inline constexpr std::uint32_t kSimNoise = 0x51A03u;
inline constexpr std::uint32_t kSimOracle = 0x51A04u;
inline constexpr std::uint32_t kSimScores = 0x51A05u;
}  // namespace tag

}  // namespace discovery::rng
