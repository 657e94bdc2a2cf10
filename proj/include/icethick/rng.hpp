#pragma once

#include <cstdint>
#include <string_view>

namespace icethick {

// Counter-based generator: the n-th draw is splitmix64(seed + n * golden).
// Only integer arithmetic touches the state, so streams are identical on
// every platform; normal draws additionally depend on libm log/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  // Independent stream keyed by (seed, tag, index).
  static Rng substream(std::uint64_t seed, std::string_view tag,
                       std::uint64_t index = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; consumes exactly two draws.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace icethick
