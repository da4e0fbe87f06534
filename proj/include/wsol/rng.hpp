#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace wsol {

/// Independent purposes a substream can serve. Mixed into the stream key so
/// that e.g. the shuffle of epoch 3 never aliases the augmentation of sample 3.
enum class StreamDomain : std::uint64_t {
  augment = 1,
  shuffle = 2,
  init = 3,
  data_train = 4,
  data_test = 5,
  test = 6,
};

/// Deterministic random stream keyed by (seed, epoch, index, domain).
///
/// Draws are built from raw mt19937_64 words with fixed conversions so a
/// given key produces the same sequence on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t epoch = 0, std::uint64_t index = 0,
                     StreamDomain domain = StreamDomain::augment)
      : engine_(key(seed, epoch, index, domain)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  static std::uint64_t key(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index,
                           StreamDomain domain) {
    std::uint64_t h = splitmix(seed);
    h = splitmix(h ^ static_cast<std::uint64_t>(domain));
    h = splitmix(h ^ epoch);
    return splitmix(h ^ index);
  }

  std::mt19937_64 engine_;
};

}  // namespace wsol
