#pragma once

#include <cstdint>
#include <random>

namespace qtraj {

/// Per-trajectory random stream. The engine is std::mt19937_64, seeded from a
/// SplitMix64 hash of (master seed, stream index), so trajectory i draws the
/// same numbers regardless of which worker runs it. Variates are produced by
/// explicit formulas rather than std:: distributions, whose algorithms are
/// implementation-defined, to keep outputs identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t master_seed, std::uint64_t index);

  /// Uniform on [0,1) with 53 random bits.
  double uniform();
  /// Uniform on (0,1].
  double uniform_open_left() { return 1.0 - uniform(); }
  double exponential(double rate);
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace qtraj
