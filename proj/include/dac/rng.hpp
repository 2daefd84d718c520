#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "dac/common.hpp"

namespace dac {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Seeded random stream. The engine is std::mt19937_64 (its output sequence is
// pinned by the standard); all distributions are hand-rolled on top of the raw
// 64-bit stream so that draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(detail::splitmix64(seed)) {}

  // Independent stream derived from (seed, stream); used to give each
  // Monte Carlo run its own generator.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(detail::splitmix64(seed ^ detail::splitmix64(stream_id + 1)));
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    int k = int(uniform() * double(n));
    return k < n ? k : n - 1;
  }

  // Standard normal via Box-Muller; one spare is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Index distributed according to the (normalized) weight vector p.
  int categorical(std::span<const double> p) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return int(i);
    }
    return int(p.size()) - 1;
  }

  int categorical(const Vec& p) {
    return categorical(std::span<const double>(p.data(), std::size_t(p.size())));
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dac
