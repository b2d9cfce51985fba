#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace atgt {

// Counter-based random streams. Every consumer derives its own stream from
// (master seed, purpose tag, element index), so results never depend on the
// order in which elements are processed or on how work is split across
// threads.
namespace rng {

inline constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ull;

// splitmix64 output finalizer.
inline uint64_t mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t hash_tag(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Stream key for (seed, tag, index). Distinct argument triples map to
// distinct keys with overwhelming probability.
inline uint64_t derive_key(uint64_t seed, std::string_view tag, uint64_t index = 0) {
  uint64_t k = mix(seed + kGamma);
  k = mix(k ^ hash_tag(tag));
  return mix(k + index * kGamma);
}

}  // namespace rng

// One independent stream: the i-th output is a pure function of (key, i).
class Stream {
 public:
  explicit Stream(uint64_t key) : state_(key), key_(key) {}

  Stream(uint64_t seed, std::string_view tag, uint64_t index = 0)
      : Stream(rng::derive_key(seed, tag, index)) {}

  uint64_t key() const { return key_; }

  uint64_t next_u64() {
    state_ += rng::kGamma;
    return rng::mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n), unbiased. n must be nonzero.
  uint64_t next_below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const uint64_t v = next_u64();
      if (v >= threshold) return v % n;
    }
  }

  // Standard normal via Box-Muller; the second deviate is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  uint64_t state_;
  uint64_t key_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace atgt
