#pragma once

// Central finite differences over every scalar of a parameter set.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace fd {

inline constexpr double kStep = 1e-5;
/// Denominator floor of the relative error. With h = 1e-5 and O(1) losses the
/// central difference carries about 1e-10 of round-off (measured: the error on
/// near-zero components grows ~100x when h drops to 1e-7), so components below
/// the floor are judged on absolute error scaled by the floor instead.
inline constexpr double kFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kFloor});
  return std::abs(analytic - numeric) / denom;
}

/// Perturbs each entry of `params` in place (restoring it afterwards) and
/// compares (L(p+h) - L(p-h)) / 2h with the matching entry of `grads`.
template <class Loss>
double max_relative_error(const std::vector<std::span<double>>& params,
                          const std::vector<std::span<const double>>& grads, Loss&& loss,
                          double h = kStep) {
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].size(); ++j) {
      double& p = params[t][j];
      const double keep = p;
      p = keep + h;
      const double up = loss();
      p = keep - h;
      const double down = loss();
      p = keep;
      worst = std::max(worst, relative_error(grads[t][j], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace fd
