// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "aems/autodiff.hpp"

namespace aems {

/// Scalar-valued function of several tensors, evaluated on a fresh graph.
using MultiScalarFn = std::function<Var(Graph&, std::span<const Var>)>;
using ScalarFn = std::function<Var(Graph&, Var)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool nan_encountered = false;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;

  [[nodiscard]] bool passes(double tol) const { return !nan_encountered && max_rel_error < tol; }
};

/// Compares reverse-mode gradients with central differences.
///
/// The error per coordinate is |analytic - numeric| / max(1, |numeric|).
/// `coord_stride` > 1 samples every stride-th coordinate of each input, which
/// keeps full-model checks affordable.
inline GradCheckResult grad_check_detailed(const MultiScalarFn& f, const std::vector<Tensor>& points,
                                           double step = 1e-5, std::size_t coord_stride = 1) {
  GradCheckResult result;
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& p : points) leaves.push_back(g.leaf(p));
    Var root = f(g, leaves);
    g.backward(root);
    for (const Var& v : leaves) analytic.push_back(g.grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& pts) {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& p : pts) leaves.push_back(g.constant(p));
    return f(g, leaves).value().item();
  };
  std::vector<Tensor> probe = points;
  for (std::size_t t = 0; t < points.size(); ++t) {
    for (std::size_t i = 0; i < points[t].size(); i += coord_stride) {
      const double orig = points[t][i];
      probe[t][i] = orig + step;
      const double up = eval(probe);
      probe[t][i] = orig - step;
      const double down = eval(probe);
      probe[t][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[t][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        result.nan_encountered = true;
        result.max_rel_error = std::numeric_limits<double>::infinity();
        result.worst_input = t;
        result.worst_coord = i;
        return result;
      }
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = t;
        result.worst_coord = i;
      }
    }
  }
  return result;
}

/// Max relative error between analytic and central-difference gradients of
/// `f` at `point`; +inf when any evaluation is non-finite.
inline double grad_check(const ScalarFn& f, const Tensor& point, double step = 1e-5) {
  MultiScalarFn wrapped = [&f](Graph& g, std::span<const Var> xs) { return f(g, xs[0]); };
  return grad_check_detailed(wrapped, {point}, step).max_rel_error;
}

}  // namespace aems
