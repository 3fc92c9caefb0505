#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bitgear {

// One master seed per run, split into fixed per-purpose streams so that
// thread counts and call order cannot perturb downstream draws.
enum class RngPurpose : std::uint64_t {
  Init = 1,
  Sampling = 2,
  BenchQueries = 3,
  Fixture = 4,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// mt19937_64 raw output is pinned down by the standard; the bounded and
// floating-point draws below are hand-rolled because std distributions are
// implementation-defined and would break cross-toolchain reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, RngPurpose purpose = RngPurpose::Fixture)
      : gen_(splitmix64(seed ^ (0xA0761D6478BD642FULL *
                                static_cast<std::uint64_t>(purpose)))) {}

  std::uint64_t next() { return gen_(); }

  // Unbiased draw in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t lim = (0 - bound) % bound;  // 2^64 mod bound
    std::uint64_t r;
    do {
      r = next();
    } while (r < lim);
    return r % bound;
  }

  std::uint32_t index(std::size_t bound) {
    return static_cast<std::uint32_t>(below(static_cast<std::uint64_t>(bound)));
  }

  double uniform01() {  // [0, 1) with 53-bit resolution
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double normal(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    // Box-Muller; u1 in (0, 1] so the log is finite.
    const double u1 =
        (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bitgear
