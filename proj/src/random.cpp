#include "specring/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace specring {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("poisson: bad mean");
  if (mean == 0.0) return 0.0;
  if (mean > 50.0) return std::round(std::max(0.0, mean + std::sqrt(mean) * normal()));
  const double u = uniform();
  double p = std::exp(-mean);
  double cdf = p;
  double k = 0.0;
  while (u >= cdf && k < 1000.0) {
    k += 1.0;
    p *= mean / k;
    cdf += p;
  }
  return k;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below: empty range");
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

}  // namespace specring
