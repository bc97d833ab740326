// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aems/autodiff.hpp"
#include "aems/error.hpp"

namespace aems {

struct LossWeights {
  double lambda_mse = 1.0;
  double lambda_contrastive = 0.1;
  double temperature = 0.5;

  void validate() const {
    if (!(std::isfinite(lambda_mse) && lambda_mse >= 0.0)) throw ConfigError("lambda_mse must be finite and >= 0");
    if (!(std::isfinite(lambda_contrastive) && lambda_contrastive >= 0.0))
      throw ConfigError("lambda_contrastive must be finite and >= 0");
    if (!(std::isfinite(temperature) && temperature > 0.0)) throw ConfigError("temperature must be > 0");
  }

  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double ce = 0.0;
  double mse = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
};

/// Class probabilities of a logit vector.
inline std::vector<double> class_probs(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("softmax of empty input");
  const Tensor p = softmax(Tensor::vector({logits.begin(), logits.end()}));
  return {p.values().begin(), p.values().end()};
}

inline double cross_entropy(std::span<const double> probs, std::size_t gold_band) {
  if (gold_band >= probs.size())
    throw DataError("gold band " + std::to_string(gold_band) + " outside " + std::to_string(probs.size()) +
                    " classes");
  return -std::log(probs[gold_band]);
}

/// -log softmax(z)[gold], computed from logits for stability.
inline Var cross_entropy_logits(Var logits, std::size_t gold_band) {
  if (gold_band >= logits.size())
    throw DataError("gold band " + std::to_string(gold_band) + " outside " + std::to_string(logits.size()) +
                    " classes");
  return scale(pick(log_softmax(logits), gold_band), -1.0);
}

inline double mse(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size() || pred.empty())
    throw DimensionError("mse length mismatch: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(gold.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gold[i]) * (pred[i] - gold[i]);
  return s / static_cast<double>(pred.size());
}

/// Sum of squared differences against a constant target.
inline Var squared_error_sum(Var pred, const Tensor& gold) {
  if (pred.shape() != gold.shape())
    throw DimensionError("mse shape mismatch: " + shape_str(pred.shape()) + " vs " + shape_str(gold.shape()));
  return sum(square(sub(pred, pred.graph->constant(gold))));
}

using PositivePairs = std::vector<std::pair<std::size_t, std::size_t>>;

/// NT-Xent over 2N representations forming N positive pairs. Each anchor i
/// with partner j contributes
///   -log( exp(sim(z_i,z_j)/tau) / sum_{k != i} exp(sim(z_i,z_k)/tau) )
/// with cosine similarity; the result is the mean over all 2N anchors.
inline Var nt_xent(std::span<const Var> reprs, const PositivePairs& pairs, double temperature) {
  if (!(temperature > 0.0)) throw UsageError("NT-Xent temperature must be positive");
  if (pairs.empty()) throw UsageError("NT-Xent needs at least one positive pair");
  const std::size_t n = reprs.size();
  if (n != 2 * pairs.size())
    throw UsageError("NT-Xent expects 2N representations for N pairs, got " + std::to_string(n) + " for " +
                     std::to_string(pairs.size()));
  std::vector<std::size_t> partner(n, std::numeric_limits<std::size_t>::max());
  for (const auto& [a, b] : pairs) {
    if (a >= n || b >= n || a == b) throw UsageError("NT-Xent pair index out of range or self-paired");
    if (partner[a] != std::numeric_limits<std::size_t>::max() ||
        partner[b] != std::numeric_limits<std::size_t>::max())
      throw UsageError("NT-Xent index appears in more than one pair");
    partner[a] = b;
    partner[b] = a;
  }
  const double inv_tau = 1.0 / temperature;
  // sim[i][k] for k > i, reused for both anchor directions.
  std::vector<std::vector<Var>> sim(n, std::vector<Var>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i + 1; k < n; ++k) {
      sim[i][k] = scale(cosine_similarity(reprs[i], reprs[k]), inv_tau);
      sim[k][i] = sim[i][k];
    }
  std::vector<Var> anchor_losses;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Var> others;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) others.push_back(sim[i][k]);
    anchor_losses.push_back(sub(logsumexp(stack(others)), sim[i][partner[i]]));
  }
  return mean(stack(anchor_losses));
}

inline double nt_xent(const std::vector<Tensor>& reprs, const PositivePairs& pairs, double temperature) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : reprs) vars.push_back(g.constant(t));
  return nt_xent(vars, pairs, temperature).value().item();
}

/// total = ce + lambda_mse * mse + lambda_contrastive * contrastive.
inline LossBreakdown combined_loss(double ce, double mse_value, double contrastive, const LossWeights& w) {
  w.validate();
  for (double c : {ce, mse_value, contrastive})
    if (!(std::isfinite(c) && c >= 0.0)) throw UsageError("loss components must be finite and >= 0");
  return {ce, mse_value, contrastive, ce + (w.lambda_mse * mse_value + w.lambda_contrastive * contrastive)};
}

inline Var combined_loss(Var ce, Var mse_value, Var contrastive, const LossWeights& w) {
  return add(ce, add(scale(mse_value, w.lambda_mse), scale(contrastive, w.lambda_contrastive)));
}

}  // namespace aems
