#pragma once

#include <cstdint>
#include <random>

#include "cropdiv/types.hpp"

namespace cropdiv::rng {

/// SplitMix64-style stream derivation so independent stages of a run can
/// share one user-facing seed without sharing a generator.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

Vector gaussian(int dim, std::mt19937_64& gen);
Vector unit(int dim, std::mt19937_64& gen);

}  // namespace cropdiv::rng
