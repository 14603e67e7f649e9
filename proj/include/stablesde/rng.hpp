#pragma once

#include <cstdint>
#include <cmath>

namespace stablesde {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic per-path random stream (xoshiro256++), keyed by
// (seed, stream_id, role). Identical keys reproduce identical draws
// bit-for-bit. Ensembles give each path its own stream_id; role
// separates the Gaussian stream (0) from the subordinator stream (1)
// so common-random-number runs share Gaussians across alpha values.
//
// Draw-order contract used by the samplers: within one EM step the
// subordinator consumes (uniform, exponential) from role 1, then the
// d Gaussians come from role 0. normal() consumes exactly two
// uniforms (Box-Muller, cosine branch, no cached spare).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0,
                     std::uint64_t role = 0) {
    std::uint64_t x = splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
    x = splitmix64(x ^ splitmix64(stream_id));
    x = splitmix64(x ^ splitmix64(role ^ 0xbb67ae8584caa73bULL));
    for (auto& w : s_) {
      x = splitmix64(x);
      w = x;
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // strictly inside (0,1)
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }

  double exponential() { return -std::log(uniform()); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace stablesde
