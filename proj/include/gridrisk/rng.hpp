#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace gridrisk {

// SplitMix64 output function (Vigna). Bijective, full avalanche.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a + 0x9e3779b97f4a7c15ULL * (b + 1));
}

// Counter-based random stream: draw k of stream (seed, id) is
// mix64(origin(seed, id) + k * gamma). Streams are cheap to construct,
// independent for distinct ids, and every draw is replayable from
// (seed, stream_id, counter) alone, which is what makes parallel runs
// bit-identical to serial ones.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), counter_(0) {
    origin_ = mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^
                    mix64(stream_id + 0x3c6ef372fe94f82aULL));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void seek(std::uint64_t counter) noexcept { counter_ = counter; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(origin_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1), 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t uniform_below(std::uint64_t n) noexcept {
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = -n % n;
      while (lo < t) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::size_t uniform_index(std::size_t n) noexcept {
    return static_cast<std::size_t>(uniform_below(n));
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Standard normal, Box-Muller. Two uniforms per draw, cosine branch only,
  // so the draw count per call is fixed and replay stays aligned.
  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925287 * u2);
  }

  // Poisson via Knuth's product method; fine for the small rates used here.
  std::uint32_t poisson(double lambda) noexcept {
    const double limit = std::exp(-lambda);
    std::uint32_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Pareto with scale xm > 0 and tail exponent alpha > 0; support [xm, inf).
  double pareto(double xm, double alpha) noexcept {
    return xm * std::pow(1.0 - uniform(), -1.0 / alpha);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t origin_;
  std::uint64_t counter_;
};

}  // namespace gridrisk
