#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace advdet {

// splitmix64 finalizer, used to decorrelate derived seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Sub-stream seed for per-item work (images, epochs, matrix cells). The
// base is finalized before the index is folded in; a bare base ^ index
// collides across streams whenever base1 ^ i1 == base2 ^ i2, which small
// dataset seeds hit easily (and silently duplicates fixtures).
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  return mix64(mix64(base) ^ index);
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) {
  return mix64(mix64(mix64(base) ^ a) ^ b);
}

// Deterministic random source. The engine (mt19937_64) is bit-specified by
// the standard; the distributions here are hand-rolled because the standard
// library distribution objects are implementation-defined and would break
// byte-identical reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix64(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi] inclusive (Lemire multiply-shift, unbiased
  // enough for our range sizes; ranges here are tiny relative to 2^64).
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    const unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<int64_t>(m >> 64);
  }

  // Fair coin / Bernoulli(p).
  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller; one spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Sign in {-1, +1}.
  int sign() { return (next_u64() >> 63) ? 1 : -1; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace advdet
