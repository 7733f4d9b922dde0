#pragma once

#include <cstdint>
#include <random>

namespace embattr {

/// Seeded generator used for every stochastic step in the toolkit.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The derived draws below are implemented here rather than taken
/// from <random> distributions, whose algorithms are implementation-defined,
/// so that a given seed yields the same samples on every platform:
///   - uniform01: top 53 bits of one engine word, scaled by 2^-53
///   - below(n):  rejection sampling on the 64-bit word (no modulo bias)
///   - normal:    Box-Muller, both variates used in order
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform01();
  /// Uniform in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace embattr
