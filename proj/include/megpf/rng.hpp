#ifndef MEGPF_RNG_HPP
#define MEGPF_RNG_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace megpf {

/// Counter-based random streams: every (seed, step, particle, phase) tuple
/// maps to an independent generator state, so results do not depend on how
/// work is scheduled across threads.
///
/// Stream derivation hashes the key with splitmix64; draws come from
/// xoshiro256**. All integer arithmetic, hence reproducible across
/// platforms; floating-point draws are reproducible for a fixed libm.
class RngStream {
 public:
  enum class Phase : std::uint64_t {
    Init = 1,
    Propose = 2,
    Move = 3,
    Resample = 4,
    Generate = 5,
    Scratch = 6,
  };

  static RngStream from_key(std::uint64_t seed, std::uint64_t a = 0,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = seed;
    h = mix(h, a);
    h = mix(h, b);
    h = mix(h, c);
    RngStream s;
    std::uint64_t x = h;
    for (auto& w : s.state_) w = splitmix64(x);
    // all-zero state is the one invalid xoshiro state
    if ((s.state_[0] | s.state_[1] | s.state_[2] | s.state_[3]) == 0)
      s.state_[0] = 0x9e3779b97f4a7c15ull;
    return s;
  }

  static RngStream stream(std::uint64_t seed, int step, int particle,
                          Phase phase) {
    return from_key(seed, static_cast<std::uint64_t>(step),
                    static_cast<std::uint64_t>(particle),
                    static_cast<std::uint64_t>(phase));
  }

  std::uint64_t next_u64() {
    std::uint64_t& s0 = state_[0];
    std::uint64_t& s1 = state_[1];
    std::uint64_t& s2 = state_[2];
    std::uint64_t& s3 = state_[3];
    const std::uint64_t result = std::rotl(s1 * 5, 7) * 9;
    const std::uint64_t t = s1 << 17;
    s2 ^= s0;
    s3 ^= s1;
    s1 ^= s2;
    s0 ^= s3;
    s2 ^= t;
    s3 = std::rotl(s3, 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  Eigen::Vector3d normal3() { return {normal(), normal(), normal()}; }

  /// Unbiased integer in [0, n); n >= 1.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t mask = ~std::uint64_t{0} >> std::countl_zero(n | 1);
    for (;;) {
      const std::uint64_t v = next_u64() & mask;
      if (v < n) return v;
    }
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    std::uint64_t x = h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
    return splitmix64(x);
  }

  std::array<std::uint64_t, 4> state_{};
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace megpf

#endif
