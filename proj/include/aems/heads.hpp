// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "aems/autodiff.hpp"
#include "aems/encoder.hpp"
#include "aems/error.hpp"
#include "aems/rubric.hpp"

namespace aems {

/// One dense layer per rubric dimension: weight [K x d_model], bias [K].
struct ClassificationHeadParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

/// Multi-output regression: weight [D x d_model], bias [D].
struct RegressionHeadParams {
  Tensor weight;
  Tensor bias;
};

inline ClassificationHeadParams classification_heads(const ModelParams& p, const RubricSpec& rubric) {
  ClassificationHeadParams h;
  for (const auto& dim : rubric.dimensions) {
    h.weights.push_back(p.get("head.cls." + dim + ".weight"));
    h.biases.push_back(p.get("head.cls." + dim + ".bias"));
  }
  return h;
}

inline RegressionHeadParams regression_head(const ModelParams& p) {
  return {p.get("head.reg.weight"), p.get("head.reg.bias")};
}

namespace heads_detail {

// W [r x d] times v [d] plus b [r], as a vector.
inline Var affine(Var weight, Var v, Var bias) {
  const Tensor& w = weight.value();
  if (w.rank() != 2 || v.value().rank() != 1 || w.cols() != v.size())
    throw DimensionError("head weight " + shape_str(w.shape()) + " does not fit representation " +
                         shape_str(v.shape()));
  if (bias.value().rank() != 1 || bias.size() != w.rows())
    throw DimensionError("head bias " + shape_str(bias.shape()) + " does not fit weight " +
                         shape_str(w.shape()));
  Var col = reshape(v, {v.size(), 1});
  return add_bias(reshape(matmul(weight, col), {w.rows()}), bias);
}

}  // namespace heads_detail

/// Per-dimension logits z_d = W_d cls + b_d.
inline std::vector<Var> classify(Var cls, std::span<const Var> weights, std::span<const Var> biases) {
  if (weights.size() != biases.size())
    throw ConfigError("classification heads have mismatched weight and bias counts");
  std::vector<Var> logits;
  for (std::size_t d = 0; d < weights.size(); ++d)
    logits.push_back(heads_detail::affine(weights[d], cls, biases[d]));
  return logits;
}

inline std::vector<Var> classify(Var cls, const BoundModel& m) { return classify(cls, m.cls_weight, m.cls_bias); }

inline std::vector<Tensor> classify(const Tensor& cls, const ClassificationHeadParams& heads,
                                    const RubricSpec& rubric) {
  if (heads.weights.size() != rubric.num_dimensions() || heads.biases.size() != rubric.num_dimensions())
    throw ConfigError("classification heads cover " + std::to_string(heads.weights.size()) +
                      " dimensions, rubric has " + std::to_string(rubric.num_dimensions()));
  for (const Tensor& w : heads.weights)
    if (w.rows() != rubric.num_bands())
      throw ConfigError("classification head has " + std::to_string(w.rows()) + " classes, rubric has " +
                        std::to_string(rubric.num_bands()) + " bands");
  Graph g;
  std::vector<Var> w, b;
  for (std::size_t d = 0; d < heads.weights.size(); ++d) {
    w.push_back(g.constant(heads.weights[d]));
    b.push_back(g.constant(heads.biases[d]));
  }
  std::vector<Tensor> out;
  for (Var z : classify(g.constant(cls), w, b)) out.push_back(z.value());
  return out;
}

/// Continuous per-dimension scores y = beta cls + gamma (unclamped).
inline Var regress(Var cls, Var weight, Var bias) { return heads_detail::affine(weight, cls, bias); }

inline Var regress(Var cls, const BoundModel& m) { return regress(cls, m.reg_weight, m.reg_bias); }

inline Tensor regress(const Tensor& cls, const RegressionHeadParams& head) {
  Graph g;
  return regress(g.constant(cls), g.constant(head.weight), g.constant(head.bias)).value();
}

/// Nearest legal band to `value` after clamping to the scale; equidistant
/// values snap to the lower band.
inline std::size_t snap_to_band(double value, const RubricSpec& rubric) {
  const auto& bands = rubric.bands;
  const double v = std::clamp(value, bands.front(), bands.back());
  auto upper = std::lower_bound(bands.begin(), bands.end(), v);
  if (upper == bands.begin()) return 0;
  if (upper == bands.end()) return bands.size() - 1;
  const auto hi = static_cast<std::size_t>(upper - bands.begin());
  const std::size_t lo = hi - 1;
  return (v - bands[lo] <= bands[hi] - v) ? lo : hi;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct DimensionScore {
  std::string dimension;
  double band = 0.0;
  std::size_t band_index = 0;
  double raw_regression = 0.0;
  /// Classification head's argmax band, reported alongside.
  std::size_t argmax_band_index = 0;
};

struct DimensionScores {
  std::string essay_id;
  std::vector<DimensionScore> dimensions;
  bool empty_input = false;
};

/// Final bands come from the regression head snapped onto the rubric scale.
inline std::vector<DimensionScore> predict_scores(const std::vector<Tensor>& logits,
                                                  std::span<const double> regression,
                                                  const RubricSpec& rubric) {
  if (logits.size() != rubric.num_dimensions() || regression.size() != rubric.num_dimensions())
    throw ConfigError("prediction covers a different number of dimensions than the rubric");
  std::vector<DimensionScore> out;
  for (std::size_t d = 0; d < rubric.num_dimensions(); ++d) {
    DimensionScore s;
    s.dimension = rubric.dimensions[d];
    s.raw_regression = regression[d];
    s.band_index = snap_to_band(regression[d], rubric);
    s.band = rubric.bands[s.band_index];
    s.argmax_band_index = argmax(logits[d].values());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace aems
