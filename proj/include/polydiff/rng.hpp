#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace polydiff {

// Deterministic random source.  The standard distributions are not pinned down
// by the C++ standard, so every draw here is derived from raw mt19937_64 words
// with explicit arithmetic; a given seed yields the same stream on every
// platform we build on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled so every value is equally likely.
  std::uint64_t uniform_u64(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % n;
  }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform_u64(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::Vector3d normal3() {
    Eigen::Vector3d v;
    v << normal(), normal(), normal();
    return v;
  }

  // Independent child stream; splitmix64 keeps child seeds well separated.
  Rng child(std::uint64_t stream) {
    std::uint64_t z = seed_mix_ ^ (stream + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    return Rng(z ^ eng_());
  }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_mix_ = 0x6a09e667f3bcc908ULL;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stateless seed mixer for deriving per-item seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace polydiff
