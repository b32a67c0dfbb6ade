#pragma once

#include <complex>
#include <cstdint>
#include <cmath>

namespace fbl {

inline constexpr double kPi = 3.14159265358979323846;

// xoshiro256++ seeded through splitmix64. Self-contained so that streams are
// reproducible across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) {
      x += 0x9e3779b97f4a7c15ull;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      word = z ^ (z >> 31);
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

  // Uniform on (0, 1]; never returns 0 so log() is always finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Uniform on [0, 1).
  double uniform_co() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bit() { return (next_u64() >> 63) != 0; }

  // N(0, 1) real Gaussian (Box-Muller).
  double normal() {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    return r * std::cos(2.0 * kPi * uniform_co());
  }

  // CN(0, 1): real and imaginary parts are N(0, 1/2).
  std::complex<double> cnormal() {
    const double r = std::sqrt(-std::log(uniform()));
    const double phase = 2.0 * kPi * uniform_co();
    return {r * std::cos(phase), r * std::sin(phase)};
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Per-trial stream: master seed xor trial index, scrambled so that adjacent
// trial indices give uncorrelated streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial) {
  std::uint64_t z = master ^ trial;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace fbl
