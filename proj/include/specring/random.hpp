#pragma once

#include <cstdint>
#include <random>

namespace specring {

/// Portable seeded source. Draws come from std::mt19937_64, whose output
/// sequence is fixed by the standard:
///   uniform()  = (next >> 11) * 2^-53, in [0, 1)
///   normal()   = Box-Muller on two uniforms (1 - u1 avoids log 0), cosine branch only
///   poisson(mu)= inversion by sequential search for mu <= 50, otherwise
///                round(max(0, mu + sqrt(mu) * normal()))
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double poisson(double mean);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace specring
