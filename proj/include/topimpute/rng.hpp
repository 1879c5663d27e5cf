#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace topimpute {

/// Seeded random stream used by every stochastic operation.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniform and normal variates are produced from raw engine bits
/// here rather than through the std:: distribution adaptors, whose algorithms
/// are implementation defined, so a given seed yields the same draws on every
/// conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  /// Standard normal via the inverse CDF.
  double normal();
  /// Exponential with unit rate.
  double exponential();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// Seed for an independent substream identified by a label, e.g. a cell id
/// joined with a method name. The result depends only on (master, label).
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

inline Rng substream(std::uint64_t master, std::string_view label) {
  return Rng(derive_seed(master, label));
}

}  // namespace topimpute
