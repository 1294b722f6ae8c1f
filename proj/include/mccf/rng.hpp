#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>

namespace mccf {

// xoshiro256++ with splitmix64 seeding. Self-contained so that seeded runs
// reproduce bit-for-bit regardless of standard library version.
//
// All randomness in the engine flows from one root seed expanded through
// Rng::stream(root, path...): each subsystem (init, split, per-epoch
// sampling, gate noise, ...) owns an independent stream and stays
// reproducible in isolation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& si : s_) si = splitmix64(x);
  }

  // Derives an independent stream from a root seed and up to three path
  // labels (subsystem tag, epoch, shard, ...).
  static Rng stream(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    std::uint64_t x = root;
    x = splitmix64(x) ^ (a * 0x9E3779B97F4A7C15ull);
    x = splitmix64(x) ^ (b * 0xBF58476D1CE4E5B9ull);
    x = splitmix64(x) ^ (c * 0x94D049BB133111EBull);
    return Rng(x);
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

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in the open interval (0, 1); exact 0 is rejected and redrawn.
  double open01() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  // Gaussian via Marsaglia's polar method; second variate cached.
  double normal(double mean, double stddev) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    have_spare_ = true;
    return mean + stddev * u * f;
  }

  // Unbiased integer in [0, n). Lemire's multiply-and-reject.
  std::uint64_t bounded(std::uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  template <typename T>
  void shuffle(std::span<T> xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::swap(xs[i - 1], xs[bounded(i)]);
    }
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream labels for Rng::stream. Values are part of the reproducibility
// contract: changing them changes every seeded run.
namespace streams {
inline constexpr std::uint64_t kInit = 1;       // parameter initialization
inline constexpr std::uint64_t kSplit = 2;      // train/test partition
inline constexpr std::uint64_t kSample = 3;     // per-epoch neighborhood draws
inline constexpr std::uint64_t kShuffle = 4;    // per-epoch batch order
inline constexpr std::uint64_t kGates = 5;      // hard-concrete noise
inline constexpr std::uint64_t kDropout = 6;    // dropout masks
inline constexpr std::uint64_t kSynth = 7;      // synthetic graph generator
inline constexpr std::uint64_t kGradcheck = 8;  // finite-difference harness
inline constexpr std::uint64_t kValSplit = 9;   // early-stopping holdout
}  // namespace streams

}  // namespace mccf
