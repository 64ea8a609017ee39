#include "lvg/rng.hpp"

#include <cmath>
#include <limits>

namespace lvg {

double Rng::gumbel() {
  // Clamp away from 0 so log(-log(u)) stays finite.
  const double u = std::uniform_real_distribution<double>(std::numeric_limits<double>::min(),
                                                          1.0)(engine_);
  return -std::log(-std::log(u));
}

Rng& global_rng() {
  static Rng rng(0);
  return rng;
}

void seed_all(std::uint64_t seed) { global_rng().seed(seed); }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

}  // namespace lvg
