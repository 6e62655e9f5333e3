#pragma once

#include <cmath>
#include <cstdint>

#include "mktsim/rng.hpp"

namespace mktsim::test {

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

// Hand-rolled generators for property tests.
struct Gen {
  Rng rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double real(double lo, double hi) { return rng.uniform(lo, hi); }
  int integer(int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }
  bool coin(double p = 0.5) { return rng.bernoulli(p); }
};

} // namespace mktsim::test
