#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace savg {

// splitmix64 finalizer; used to derive independent streams from (seed, key...).
inline uint64_t hash_mix(uint64_t h, uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

inline uint64_t hash_str(uint64_t h, const std::string& s) {
  for (unsigned char c : s) h = hash_mix(h, c);
  return hash_mix(h, s.size());
}

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// double conversions below avoid std::*_distribution, whose output is
// implementation-defined; streams are therefore bit-reproducible across
// platforms with IEEE-754 doubles.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  static Rng derive(uint64_t seed, uint64_t index) {
    return Rng(hash_mix(hash_mix(0x53415647ull, seed), index));
  }
  static Rng derive(uint64_t seed, const std::string& name) {
    return Rng(hash_str(hash_mix(0, seed), name));
  }

  uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call, cached pair dropped for simplicity.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // integer in [0, n)
  uint64_t below(uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace savg
