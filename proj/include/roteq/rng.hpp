#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace roteq {

/// mt19937 with portable flat/normal draws. std::*_distribution is
/// implementation-defined, so draws are derived from raw engine output
/// to keep runs reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(uint32_t(seed ^ (seed >> 32))) {}

  uint32_t raw() { return eng_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    uint64_t a = raw() >> 5, b = raw() >> 6;
    return (a * 67108864.0 + b) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int index(int n) { return n > 0 ? int(uniform() * n) : 0; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-12) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Derive an independent, reproducible child stream.
  Rng fork(uint64_t salt) {
    uint64_t s = (uint64_t(raw()) << 32) ^ raw() ^ (salt * 0x9e3779b97f4a7c15ULL);
    return Rng(s);
  }

 private:
  std::mt19937 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Stateless seed mixing for per-(epoch, iteration) streams.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (uint64_t x : {a, b}) {
    h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
  }
  return h;
}

}  // namespace roteq
