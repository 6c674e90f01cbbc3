#pragma once

#include <cstdint>
#include <random>

namespace hamlet {

/// Deterministic random source. mt19937_64 is fully specified by the
/// standard and the distributions are hand-rolled, so identical seeds give
/// identical streams on every platform.
class Rng {
public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n).
  uint64_t integer(uint64_t n) {
    // Rejection sampling keeps the distribution exact.
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % n;
  }

private:
  std::mt19937_64 eng_;
  double spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace hamlet
