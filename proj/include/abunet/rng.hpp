#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace abunet {

/// The single random engine used everywhere. Sequences are reproducible
/// within one build; its state serializes to text for checkpoints.
using Rng = std::mt19937_64;

std::string rng_state(const Rng& rng);
void restore_rng_state(Rng& rng, const std::string& state);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace abunet
