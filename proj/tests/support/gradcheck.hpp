#pragma once

#include "advnlg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace advnlg::testing {

// Relative error with a small absolute floor so exactly-zero gradients on
// both sides compare clean.
inline double rel_err(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= 1e-8) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Central-difference gradient check. `build` must construct the scalar loss
// from current parameter values and be deterministic (fix any noise streams
// inside it). Returns the max relative error over all elements of `wrt`.
inline double run_gradcheck(const std::function<Tensor()>& build,
                            std::vector<Tensor> wrt, double eps = 1e-6) {
  for (Tensor& t : wrt) t.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    GradientTape tape;
    Tensor loss = build();
    tape.backward(loss);
  }
  for (Tensor& t : wrt) {
    analytic.push_back(t.has_grad() ? t.grad()
                                    : std::vector<double>(t.size(), 0.0));
  }
  double max_err = 0.0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto& vals = wrt[k].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double lp = build().value();
      vals[i] = orig - eps;
      const double lm = build().value();
      vals[i] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      max_err = std::max(max_err, rel_err(analytic[k][i], numeric));
    }
  }
  for (Tensor& t : wrt) t.zero_grad();
  return max_err;
}

}  // namespace advnlg::testing
