#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "chance_rl/dynamics.hpp"

namespace chance_rl::testing {

/// E f(clamp(u)) for u ~ N(mean, sd^2), by midpoint quadrature over +-8 sd.
inline double gaussian_expectation(const std::function<double(double)>& f, Interval bounds,
                                   double mean, double sd, int nodes = 4001) {
  const double lo = mean - 8.0 * sd;
  const double step = 16.0 * sd / nodes;
  double total = 0.0, weight = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double u = lo + (i + 0.5) * step;
    const double z = (u - mean) / sd;
    const double w = std::exp(-0.5 * z * z);
    total += w * f(bounds.clamp(u));
    weight += w;
  }
  return total / weight;
}

/// Exhaustive scan of the expected return over every reachable (mean, sd)
/// pair of a squashed Gaussian policy with sd in (0, sd_max].
inline double brute_force_optimum(const std::function<double(double)>& f, Interval bounds,
                                  double sd_max, int mean_steps = 400, int sd_steps = 60) {
  double best = -INFINITY;
  for (int i = 0; i <= mean_steps; ++i) {
    const double mean = bounds.lower + bounds.width() * i / mean_steps;
    for (int j = 1; j <= sd_steps; ++j) {
      // Geometric grid down to sd_max * 1e-4.
      const double sd = sd_max * std::pow(1e-4, double(sd_steps - j) / (sd_steps - 1));
      best = std::max(best, gaussian_expectation(f, bounds, mean, sd, 801));
    }
  }
  return best;
}

}  // namespace chance_rl::testing
