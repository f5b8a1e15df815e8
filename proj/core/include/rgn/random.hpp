#pragma once

#include <cstdint>
#include <random>

namespace rgn {

/// One splitmix64 step; used to derive independent seeds from a run seed.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` of run seed `seed`: splitmix64(seed ^ splitmix64(stream)).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Uniform draw in [0, 1) with 53 random bits.
double uniform01(std::mt19937_64& rng);

/// Uniform draw in [lo, hi).
double uniform(std::mt19937_64& rng, double lo, double hi);

/// Exponential draw with the given rate.
double exponential(std::mt19937_64& rng, double rate);

}  // namespace rgn
