#pragma once

#include <cstdint>
#include <vector>

namespace thtd {

/// splitmix64 finalizer; used to derive independent seeds for named streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

/// Small portable generator (xoshiro256**) with its own normal/uniform draws so
/// results do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Normal(0, std) redrawn until inside [-2 std, 2 std].
  double trunc_normal(double std);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace thtd
