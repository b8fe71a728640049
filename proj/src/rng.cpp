#include "sbm/rng.hpp"

#include <cmath>

namespace sbm {

double Stream::exponential() { return -std::log(uniform_open0()); }

std::uint64_t Stream::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Rejection sampling on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next_bits();
  while (x >= limit) x = next_bits();
  return x % bound;
}

}  // namespace sbm
