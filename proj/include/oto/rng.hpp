#pragma once

#include <cstdint>

namespace oto::rng {

// Counter-based deterministic generator. The i-th output of a (seed, stream)
// pair is a pure function of (seed, stream, i):
//
//   mix(z):   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//             z ^= z >> 27;  z *= 0x94D049BB133111EB;
//             z ^= z >> 31;                       (SplitMix64 finalizer)
//   key   =   mix(seed + GOLDEN * (stream + 1)),  GOLDEN = 0x9E3779B97F4A7C15
//   out_i =   mix(key + GOLDEN * i)
//
// Streams are independent sequences; arbitrary skip-ahead is O(1) via the
// counter. Reference test vectors live in tests/test_rng.cpp and README.md;
// any reimplementation must reproduce them bit-exactly.
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed + kGolden * (stream + 1))), counter_(0) {}

  std::uint64_t next_u64() { return mix64(key_ + kGolden * counter_++); }

  // Uniform double in [0, 1) with 53 random bits.
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] inclusive (multiply-shift mapping; bias is
  // bounded by range/2^64, far below statistical detectability here).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Uniform double in [a, b).
  double uniform_range(double a, double b) { return a + (b - a) * u01(); }

  // Standard normal via Box-Muller; consumes exactly two counter draws per
  // value (no caching, so draw accounting stays position-independent).
  double normal();

  // Geometric on support {0, 1, 2, ...} with pmf (1-p)^k p.
  std::uint64_t geometric(double p);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace oto::rng
