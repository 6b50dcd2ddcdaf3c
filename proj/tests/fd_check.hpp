#pragma once

// Central finite-difference gradient oracle shared by the unit tests and the
// acceptance suite. Independent of the tape: it only re-runs a forward
// closure with perturbed parameter values.
#include <cmath>
#include <functional>
#include <vector>

#include "vrx/tensor/ops.hpp"

namespace vrx::testing {

// Max guarded relative error between analytic and numeric values:
// |a - n| / max(|a|, |n|, 1).
inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1.0});
}

// forward() must recompute the scalar loss from the params' current values
// (no tape). Returns the max guarded relative error over every coordinate of
// every param; analytic gradients must already sit in param.grad().
inline double fd_max_rel_error(const std::function<double()>& forward,
                               std::vector<ad::Tensor> params, double h = 1e-5) {
  double worst = 0.0;
  for (ad::Tensor& p : params) {
    const auto& analytic = p.grad();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double keep = p.data()[i];
      p.data()[i] = keep + h;
      const double up = forward();
      p.data()[i] = keep - h;
      const double down = forward();
      p.data()[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[i], numeric));
    }
  }
  return worst;
}

}  // namespace vrx::testing
