#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace diveoff {

// 64-bit FNV-1a. Used to derive named RNG streams and to fingerprint files.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// Counter-based generator (SplitMix64 core). A stream is identified by
// (seed, name); the name is hashed into the counter so that every call site
// can own an independent, reproducible sequence.
class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view name)
      : counter_(fnv1a64(name) ^ (seed * 0x9e3779b97f4a7c15ull + 0x6a09e667f3bcc909ull)) {}

  RngStream substream(std::string_view name) const {
    return RngStream(mix(counter_ ^ fnv1a64(name)));
  }

  uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ull;
    return mix(counter_);
  }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  size_t index(size_t n) { return static_cast<size_t>(next_u64() % n); }

  bool coin(double p_true = 0.5) { return uniform01() < p_true; }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  explicit RngStream(uint64_t raw_counter) : counter_(raw_counter) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t counter_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace diveoff
