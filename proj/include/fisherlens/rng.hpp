#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fisherlens {

/// Deterministic random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard library's distributions are implementation-defined,
/// so every derived variate (uniform double, Gaussian, integer range) is
/// produced here from raw engine words. Identical seeds therefore give
/// identical streams on every conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n) by rejection (no modulo bias). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Child stream whose seed mixes this stream's seed with a name.
  /// Used to split one global seed into independent named sub-streams.
  static Rng derive(std::uint64_t seed, std::string_view name);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; bijective 64-bit mixing.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace fisherlens
