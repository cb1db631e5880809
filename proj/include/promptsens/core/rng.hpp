#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace promptsens {

/// Seeded random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are implementation-defined, so all
/// derived draws (uniform reals, bounded integers, normals, weighted picks)
/// are computed here to keep streams identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Standard normal via Box-Muller.
  double normal();

  // Index drawn proportionally to non-negative `weights` (sum > 0).
  std::size_t weighted(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

// SplitMix64 finalizer; derives independent sub-seeds (per instance, per
// request) from a run seed so parallel work stays order-independent.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace promptsens
