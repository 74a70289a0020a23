#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace fpdfp {

/* Deterministic keyed PRNG.
 *
 * Every random draw in the simulator comes from a stream derived from
 * (master seed, round, client, purpose), so results are a pure function of
 * the seed and never depend on thread scheduling or on which standard
 * library implements the distributions. SplitMix64 underneath; uniforms,
 * bounded ints, shuffles and normals are pinned here for the same reason
 * (std::shuffle and std::*_distribution are implementation-defined).
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Stream key: order-sensitive fold of up to four words.
  static std::uint64_t key(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                           std::uint64_t d = 0) {
    std::uint64_t h = mix(a);
    h = mix(h ^ (b * 0xd1b54a32d192ed03ULL + 1));
    h = mix(h ^ (c * 0x8cb92ba72f3d8dd7ULL + 2));
    h = mix(h ^ (d * 0xaef17502108ef2d9ULL + 3));
    return h;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1), 53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). Lemire multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; two uniforms per call, stateless.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates. full_shuffle permutes everything; prefix_shuffle stops after
  // the first k slots hold an unbiased without-replacement sample.
  template <typename T>
  void prefix_shuffle(std::vector<T>& v, std::size_t k) {
    const std::size_t n = v.size();
    if (n == 0) return;
    if (k > n) k = n;
    const std::size_t last = (k == n) ? n - 1 : k;
    for (std::size_t i = 0; i < last; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(v[i], v[j]);
    }
  }

  template <typename T>
  void full_shuffle(std::vector<T>& v) {
    prefix_shuffle(v, v.size());
  }

 private:
  std::uint64_t state_;
};

}  // namespace fpdfp
