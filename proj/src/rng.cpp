#include "meshflow/rng.hpp"

#include <cmath>

namespace meshflow {

double normal01(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  double u1 = uniform01(a, b, c, hash_key(d, 1));
  double u2 = uniform01(a, b, c, hash_key(d, 2));
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace meshflow
