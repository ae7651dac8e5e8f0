#pragma once

#include <cstdint>

namespace meshflow {

// Counter-based generator: every draw is a pure hash of (seed, stream, counter,
// dimension), so parallel sampling stays deterministic and replayable.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_key(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                              std::uint64_t d = 0) {
  return mix64(mix64(mix64(mix64(a) + b) + c) + d);
}

/// Uniform double in [0, 1) from a 4-part key.
inline double uniform01(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                        std::uint64_t d = 0) {
  return static_cast<double>(hash_key(a, b, c, d) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two counter draws (used only by tests and
/// synthetic-case builders; never in the optimization path).
double normal01(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0, std::uint64_t d = 0);

}  // namespace meshflow
