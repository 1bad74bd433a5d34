#pragma once

#include <cmath>
#include <cstdint>

namespace radsem {

// splitmix64 step. Used both as the engine behind Rng and as a stateless
// hash, so parallel code can derive per-item draws that do not depend on
// thread layout or iteration order.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t hash_mix(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

// Maps the top 53 bits to [0, 1).
inline double u64_to_unit(uint64_t v) { return static_cast<double>(v >> 11) * 0x1.0p-53; }

// Small deterministic generator with a fixed draw sequence. The standard
// <random> distributions consume an engine-dependent number of variates,
// which would break the byte-identical reproducibility contract, so the few
// distributions needed are implemented here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // [0, 1)
  double uniform01() { return u64_to_unit(next_u64()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exponential with the given mean (rate 1/mean).
  double exponential(double mean) { return -mean * std::log(1.0 - uniform01()); }

  // Fisher-Yates support.
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Stateless per-item draws, independent of evaluation order.
inline double hashed_unit(uint64_t seed, uint64_t item) { return u64_to_unit(hash_mix(seed, item)); }

inline double hashed_exponential(uint64_t seed, uint64_t item, double mean) {
  return -mean * std::log(1.0 - hashed_unit(seed, item));
}

inline double hashed_normal(uint64_t seed, uint64_t item) {
  const double u1 = 1.0 - hashed_unit(seed, item * 2);
  const double u2 = hashed_unit(seed, item * 2 + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace radsem
