#include "s3mamba/rng.hpp"

#include <cmath>
#include <numbers>

namespace s3 {

double SplitMix64::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  SplitMix64 r(a);
  std::uint64_t h = r.next();
  r.set_state(h ^ (b * 0xD1B54A32D192ED03ULL));
  h = r.next();
  r.set_state(h ^ (c * 0x8CB92BA72F3D8DD7ULL));
  return r.next();
}

}  // namespace s3
