#include "cropdiv/rng.hpp"

namespace cropdiv::rng {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

Vector gaussian(int dim, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal(gen);
  return v;
}

Vector unit(int dim, std::mt19937_64& gen) {
  for (int tries = 0; tries < 100; ++tries) {
    Vector v = gaussian(dim, gen);
    const double n = v.norm();
    if (n > 1e-8) return v / n;
  }
  throw SamplingError("rng::unit: degenerate draws");
}

}  // namespace cropdiv::rng
