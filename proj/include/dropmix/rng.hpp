#pragma once

#include <cstdint>
#include <string_view>

namespace dropmix {

// Deterministic key derivation for named substreams. Every source of
// randomness in a run is seeded as substream(master_seed, "name", ...), so
// two runs with the same master seed replay bit-identically and independent
// consumers never share a stream.
std::uint64_t substream(std::uint64_t seed, std::string_view label);
std::uint64_t substream(std::uint64_t seed, std::uint64_t index);

// splitmix64: tiny, fast, and fully specified here so sequences do not
// depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_unit();

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi);

  // Unbiased uniform integer in [0, n), n >= 1 (rejection sampling).
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal via Box-Muller; the second deviate of each pair is
  // cached.
  double next_gaussian(double mean = 0.0, double stddev = 1.0);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dropmix
