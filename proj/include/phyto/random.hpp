#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace phyto {

/// SplitMix64 (Steele, Lea, Flood 2014). Every stochastic quantity in the
/// simulator and the actuation layer is drawn from this generator so that a
/// run is reproducible bit for bit across platforms and standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in (0, 1].
  double uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; both draws consumed per call.
  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

/// Order-sensitive mix of keys into a stream seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  SplitMix64 g(seed ^ (key * 0xD1B54A32D192ED03ULL));
  return g.next();
}

template <typename... Keys>
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key, Keys... rest) {
  return mix_seed(mix_seed(seed, key), static_cast<std::uint64_t>(rest)...);
}

}  // namespace phyto
