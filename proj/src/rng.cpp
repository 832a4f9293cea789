#include "cxr/rng.hpp"

#include <cmath>
#include <numbers>

namespace cxr {

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = max() - (max() % bound + 1) % bound;
  std::uint64_t x;
  do {
    x = next();
  } while (x > limit);
  return x % bound;
}

double SplitMix64::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  SplitMix64 mix(base);
  std::uint64_t h = mix.next();
  for (auto t : tags) {
    SplitMix64 step(h ^ (t + 0x632BE59BD9B4E019ull));
    h = step.next();
  }
  return h;
}

}  // namespace cxr
