#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace dpbam {

// Disjoint randomness purposes. Streams for distinct purposes never collide
// even at the same (seed, step, index) key.
enum class RngPurpose : std::uint64_t {
  model_init = 1,
  poisson = 2,
  gauss_noise = 3,
  data = 4,
  split = 5,
  probe = 6,
};

namespace detail {
inline std::uint64_t split_mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based PRNG keyed by (seed, step, purpose, index). Identical keys
// reproduce identical draws; draws are a splitmix64 sequence started at the
// mixed key, so the stream is stateless apart from its counter and safe to
// reconstruct anywhere.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t step, RngPurpose purpose, std::uint64_t index = 0) {
    std::uint64_t k = detail::split_mix64(seed);
    k = detail::split_mix64(k ^ detail::split_mix64(step + 0x1000));
    k = detail::split_mix64(k ^ detail::split_mix64(static_cast<std::uint64_t>(purpose) + 0x2000));
    k = detail::split_mix64(k ^ detail::split_mix64(index + 0x3000));
    state_ = k;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1).
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double next_gauss() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  void fill_gauss(std::span<double> out, double stddev) {
    for (double& x : out) x = stddev * next_gauss();
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dpbam
