#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <utility>

namespace rissim {

// All randomness flows through mt19937_64 plus the hand-rolled distribution
// helpers below.  Standard-library distributions are avoided on purpose: their
// output sequences differ between libstdc++/libc++/MSVC, and results here must
// be reproducible bit-for-bit from (config, seed) alone on any platform.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

// splitmix64 finalizer; good avalanche, cheap, stateless.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Folds a path of stream identifiers into a master seed, so every consumer
// (phase schedule, each Monte Carlo trial, ...) gets an independent generator
// whose seed does not collide with any other path.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (std::uint64_t p : path) s = mix64(s ^ p);
  return s;
}

// Uniform in [0, 1) with 53-bit resolution; never returns 1.
inline double uniform_unit(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform in [lo, hi).
inline double uniform_real(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(g);
}

// Unbiased integer in [0, n) via rejection.
inline std::uint64_t uniform_below(Rng& g, std::uint64_t n) {
  constexpr std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t reject_above = max - (max % n + 1) % n;
  std::uint64_t r = g();
  while (r > reject_above) r = g();
  return r % n;
}

// Two independent standard normals (Box-Muller); consumes exactly two draws.
inline std::pair<double, double> normal_pair(Rng& g) {
  const double u1 = 1.0 - uniform_unit(g);  // (0, 1]: keeps log() finite
  const double u2 = uniform_unit(g);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

// Circularly symmetric complex normal with E|z|^2 = 1.
inline std::complex<double> complex_normal(Rng& g) {
  const auto [a, b] = normal_pair(g);
  return {a * std::numbers::sqrt2 / 2.0, b * std::numbers::sqrt2 / 2.0};
}

}  // namespace rissim
