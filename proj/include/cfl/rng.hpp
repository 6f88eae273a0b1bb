#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cfl {

// All randomness in the library flows through this header so that seeds
// reproduce bit-for-bit across platforms and versions. The generator is
// std::mt19937_64 (fully specified by the standard); the variate
// transformations below are fixed here instead of using the stdlib
// distributions, whose output is implementation-defined.

namespace detail {

// splitmix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

}  // namespace detail

// Counter-keyed stream derivation: stream_key(seed, i) is the seed of the
// i-th substream of `seed`. Keys are splitmix64 outputs of seed + (i+1)*phi,
// so (seed, index) fully determines a stream.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index) {
  return detail::mix64(seed + (index + 1) * detail::kGolden);
}

// Domain separation for internal uses so library-internal substreams never
// collide with user-visible split_stream keys.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index, std::uint64_t domain) {
  return detail::mix64((seed ^ detail::mix64(domain)) + (index + 1) * detail::kGolden);
}

class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard normal via the trigonometric Box-Muller transform; the pair is
  // cached so the stream consumes exactly two uniforms per two normals.
  double gaussian01() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    // Guard against log(0).
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t raw() { return gen_(); }

  // Uniform integer in [0, n) by rejection-free scaling (n must be small
  // relative to 2^53; fine for index draws).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
  }

private:
  std::mt19937_64 gen_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace cfl
