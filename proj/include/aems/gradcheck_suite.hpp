// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "aems/autodiff.hpp"
#include "aems/encoder.hpp"
#include "aems/grad_check.hpp"
#include "aems/loss.hpp"
#include "aems/model.hpp"
#include "aems/rubric.hpp"

namespace aems {

struct GradCheckComponent {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckSuiteOptions {
  std::uint64_t seed = 7;
  /// Encoder width for the full-loss check.
  std::size_t d_model = 16;
  /// Adds a term with a deliberately wrong derivative to every check, so a
  /// healthy checker must report failures.
  bool sabotage = false;
};

inline constexpr double kOpGradTolerance = 1e-6;
inline constexpr double kModelGradTolerance = 1e-4;

namespace gradcheck_detail {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// sum(x * w) for a fixed random w, so every output coordinate matters.
inline Var weighted_sum(Var x, const Tensor& w) { return sum(mul(x, x.graph->constant(w))); }

// Value x^2, derivative x (the true derivative is 2x).
inline Var broken_square(Var a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return x; });
}

inline Var sabotaged(Var loss, Var probe, bool on) {
  if (!on) return loss;
  return add(loss, sum(broken_square(probe)));
}

inline EncodedRecord fixture_record(std::mt19937_64& rng, std::size_t vocab_size, std::size_t len,
                                    const TokenIds& prompt, const std::string& prompt_key, const RubricSpec& rubric) {
  std::uniform_int_distribution<std::size_t> tok(kReservedTokens, vocab_size - 1);
  std::uniform_int_distribution<std::size_t> band(0, rubric.num_bands() - 1);
  EncodedRecord r;
  r.essay.ids.push_back(kClsId);
  for (std::size_t i = 0; i < len; ++i) r.essay.ids.push_back(tok(rng));
  r.prompt = prompt;
  r.prompt_key = prompt_key;
  std::vector<double> scores;
  for (std::size_t d = 0; d < rubric.num_dimensions(); ++d) {
    r.gold_bands.push_back(band(rng));
    scores.push_back(rubric.bands[r.gold_bands.back()]);
  }
  r.gold_scores = Tensor::vector(scores);
  return r;
}

}  // namespace gradcheck_detail

/// Finite-difference checks of each differentiable building block and of the
/// full three-term loss through a small encoder.
inline std::vector<GradCheckComponent> run_gradcheck_suite(const GradCheckSuiteOptions& opt = {}) {
  using namespace gradcheck_detail;
  std::mt19937_64 rng(opt.seed);
  std::vector<GradCheckComponent> out;
  const bool sab = opt.sabotage;

  auto check = [&](const std::string& name, const MultiScalarFn& f, const std::vector<Tensor>& points, double tol) {
    MultiScalarFn wrapped = [&f, sab](Graph& g, std::span<const Var> xs) { return sabotaged(f(g, xs), xs[0], sab); };
    const GradCheckResult r = grad_check_detailed(wrapped, points);
    out.push_back({name, r.max_rel_error, tol, r.passes(tol)});
  };

  {
    const Tensor w = random_tensor(rng, {3, 5});
    check("matmul", [w](Graph&, std::span<const Var> x) { return weighted_sum(matmul(x[0], x[1]), w); },
          {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5})}, kOpGradTolerance);
  }
  {
    const Tensor w = random_tensor(rng, {4, 3});
    check("add_bias", [w](Graph&, std::span<const Var> x) { return weighted_sum(add_bias(x[0], x[1]), w); },
          {random_tensor(rng, {4, 3}), random_tensor(rng, {3})}, kOpGradTolerance);
  }
  {
    const Tensor w = random_tensor(rng, {2, 6});
    check("gelu", [w](Graph&, std::span<const Var> x) { return weighted_sum(gelu(x[0]), w); },
          {random_tensor(rng, {2, 6}, -3.0, 3.0)}, kOpGradTolerance);
  }
  {
    const Tensor w = random_tensor(rng, {3, 8});
    check("layer_norm",
          [w](Graph&, std::span<const Var> x) { return weighted_sum(layer_norm(x[0], x[1], x[2]), w); },
          {random_tensor(rng, {3, 8}, -2.0, 2.0), random_tensor(rng, {8}, 0.5, 1.5), random_tensor(rng, {8})},
          kOpGradTolerance);
  }
  {
    const Tensor w = random_tensor(rng, {3, 5});
    check("softmax_rows", [w](Graph&, std::span<const Var> x) { return weighted_sum(softmax_rows(x[0]), w); },
          {random_tensor(rng, {3, 5}, -3.0, 3.0)}, kOpGradTolerance);
  }
  check("cross_entropy", [](Graph&, std::span<const Var> x) { return cross_entropy_logits(x[0], 2); },
        {random_tensor(rng, {9}, -3.0, 3.0)}, kOpGradTolerance);
  check("logsumexp", [](Graph&, std::span<const Var> x) { return logsumexp(x[0]); },
        {random_tensor(rng, {7}, -4.0, 4.0)}, kOpGradTolerance);
  check("cosine_similarity", [](Graph&, std::span<const Var> x) { return cosine_similarity(x[0], x[1]); },
        {random_tensor(rng, {6}), random_tensor(rng, {6})}, kOpGradTolerance);
  {
    const Tensor w = random_tensor(rng, {4, 3});
    const std::vector<std::size_t> ids{2, 0, 2, 4};
    check("gather_rows", [w, ids](Graph&, std::span<const Var> x) { return weighted_sum(gather_rows(x[0], ids), w); },
          {random_tensor(rng, {5, 3})}, kOpGradTolerance);
  }
  {
    const Tensor gold = random_tensor(rng, {6}, 1.0, 5.0);
    check("squared_error", [gold](Graph&, std::span<const Var> x) { return squared_error_sum(x[0], gold); },
          {random_tensor(rng, {6}, 1.0, 5.0)}, kOpGradTolerance);
  }
  check("nt_xent",
        [](Graph&, std::span<const Var> x) {
          std::vector<Var> reprs(x.begin(), x.end());
          return nt_xent(reprs, {{0, 1}, {2, 3}, {4, 5}}, 0.5);
        },
        {random_tensor(rng, {5}), random_tensor(rng, {5}), random_tensor(rng, {5}), random_tensor(rng, {5}),
         random_tensor(rng, {5}), random_tensor(rng, {5})},
        kOpGradTolerance);

  // Full model: two prompts, two essays each, all three loss terms active.
  {
    const RubricSpec rubric = ellipse_rubric();
    EncoderConfig cfg;
    cfg.vocab_size = 24;
    cfg.max_seq_len = 16;
    cfg.d_model = opt.d_model;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 2 * opt.d_model;
    const ModelParams params = ModelParams::initialize(cfg, rubric, opt.seed);
    std::vector<EncodedRecord> records;
    for (std::size_t p = 0; p < 2; ++p) {
      TokenIds prompt;
      prompt.ids = {kClsId, 3 + p, 5 + p, 7 + p};
      for (std::size_t e = 0; e < 2; ++e)
        records.push_back(fixture_record(rng, cfg.vocab_size, 5 + e + p, prompt, "prompt-" + std::to_string(p), rubric));
    }
    const Batch batch{{0, 1, 2, 3}, {{0, 1}, {2, 3}}};
    const LossWeights weights{1.0, 0.1, 0.5};
    MultiScalarFn loss = [&](Graph& g, std::span<const Var> xs) {
      BoundModel m = aems::bind(g, params, xs);
      return batch_loss(m, records, batch, nullptr, weights).total;
    };
    check("full_loss", loss, params.tensors(), kModelGradTolerance);
  }
  return out;
}

}  // namespace aems
