// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "aems/error.hpp"
#include "aems/tensor.hpp"

namespace aems {

/// Global L2 norm over a set of gradients.
inline double grad_norm(std::span<const Tensor> grads) {
  double s = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

/// Rescales all gradients together so their global norm is at most
/// `max_norm`. Returns the norm before clipping.
inline double clip_grad_norm(std::span<Tensor> grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.values()) v *= f;
  }
  return norm;
}

/// Plain gradient descent: p <- p - lr * g.
inline void optimizer_step(std::span<Tensor> params, std::span<const Tensor> grads, double lr) {
  if (params.size() != grads.size()) throw std::logic_error("optimizer_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape())
      throw std::logic_error("optimizer_step: shape mismatch " + shape_str(params[i].shape()) + " vs " +
                             shape_str(grads[i].shape()));
    auto p = params[i].values();
    auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

}  // namespace aems
