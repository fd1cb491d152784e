#pragma once

#include <cmath>
#include <string>

#include "casimir/errors.hpp"

namespace casimir::numerics {

struct RootResult {
  double x = 0.0;
  int iterations = 0;
};

/// Bracketed root by the Illinois variant of regula falsi. Throws
/// ConvergenceError when f(lo) and f(hi) have the same sign.
template <class F>
RootResult find_root(F&& f, double lo, double hi, double rel_tol = 1e-15, int max_iterations = 200) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return {lo, 0};
  if (fhi == 0.0) return {hi, 0};
  if (!(flo * fhi < 0.0))
    throw ConvergenceError("find_root: no sign change in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  double x = lo, prev = hi;
  for (int it = 1; it <= max_iterations; ++it) {
    x = (lo * fhi - hi * flo) / (fhi - flo);
    if (!(x > std::min(lo, hi) && x < std::max(lo, hi))) x = 0.5 * (lo + hi);
    const double fx = f(x);
    if (fx == 0.0 || std::abs(x - prev) <= rel_tol * std::abs(x) || std::abs(hi - lo) <= rel_tol * std::abs(x))
      return {x, it};
    prev = x;
    if (fx * fhi < 0.0) {
      lo = hi;
      flo = fhi;
    } else {
      flo *= 0.5;
    }
    hi = x;
    fhi = fx;
  }
  return {x, max_iterations};
}

}  // namespace casimir::numerics
