// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aems/batching.hpp"
#include "aems/checkpoint.hpp"
#include "aems/corpus.hpp"
#include "aems/csv.hpp"
#include "aems/encoder.hpp"
#include "aems/metrics.hpp"
#include "aems/model.hpp"
#include "aems/optimizer.hpp"
#include "aems/train_config.hpp"
#include "aems/vocab.hpp"

namespace aems {

struct EpochLog {
  std::size_t epoch = 0;
  /// Step-averaged training losses of the epoch.
  LossBreakdown train;
  std::optional<MetricsReport> eval;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

struct TrainHooks {
  /// Called every `logging_steps` optimizer steps.
  std::function<void(std::size_t step, double lr, const LossBreakdown&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const std::string&)> warn;
};

namespace trainer_detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (epoch * 0x100 + stream));
}

}  // namespace trainer_detail

/// Mini-batch training of encoder and heads on the three-term loss.
///
/// Main batches carry CE and MSE. When contrastive learning is on and the
/// contrastive batch size equals the main batch size, main batches are
/// prompt-paired and also carry the NT-Xent term; otherwise an independent
/// prompt-paired batch sequence supplies it, cycled alongside the main one.
/// Each step clips the global gradient norm and applies lr_at(step).
inline TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus, const Corpus& eval_corpus,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  validate_corpus(train_corpus);
  if (!eval_corpus.records.empty() && !(eval_corpus.rubric == train_corpus.rubric))
    throw DataError("train and eval corpora use different rubrics");
  const RubricSpec& rubric = train_corpus.rubric;

  const Vocab vocab = build_vocab(train_corpus, cfg.vocab_max_size);
  EncoderConfig enc = cfg.encoder;
  enc.vocab_size = vocab.size();
  ModelParams params = ModelParams::initialize(enc, rubric, cfg.seed);

  const auto train_recs = encode_corpus(train_corpus, vocab, enc.max_seq_len);
  const auto eval_recs = encode_corpus(eval_corpus, vocab, enc.max_seq_len);

  const bool contrastive_on = cfg.loss.lambda_contrastive > 0.0;
  const bool separate = contrastive_on && cfg.contrastive_batch_size != cfg.batch_size;
  const bool pair_main = contrastive_on && !separate;
  bool warned = false;

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.num_train_epochs; ++epoch) {
    const BatchSequence main = make_batches(train_corpus, cfg.batch_size,
                                            trainer_detail::derive_seed(cfg.seed, epoch, 1), pair_main);
    BatchSequence side;
    if (separate)
      side = make_batches(train_corpus, cfg.contrastive_batch_size, trainer_detail::derive_seed(cfg.seed, epoch, 2),
                          true);
    if (contrastive_on && (pair_main ? main.no_shared_prompts : side.no_shared_prompts) && !warned) {
      if (hooks.warn) hooks.warn("no two training essays share a prompt_id; contrastive term is 0");
      warned = true;
    }

    LossBreakdown sums;
    for (std::size_t b = 0; b < main.batches.size(); ++b) {
      Graph g;
      BoundModel m = bind(g, params, true);
      const Batch* cb = separate ? &side.batches[b % side.batches.size()] : nullptr;
      const BatchLoss loss = batch_loss(m, train_recs, main.batches[b], cb, cfg.loss);
      if (!std::isfinite(loss.breakdown.total))
        throw NumericAbort("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ", batch " + std::to_string(b) + " (ce=" + format_double(loss.breakdown.ce) +
                           ", mse=" + format_double(loss.breakdown.mse) +
                           ", contrastive=" + format_double(loss.breakdown.contrastive) + ")");
      g.backward(loss.total);
      std::vector<Tensor> grads;
      grads.reserve(m.all.size());
      for (const Var& v : m.all) grads.push_back(g.grad(v));
      const double norm = clip_grad_norm(grads, cfg.max_grad_norm);
      if (!std::isfinite(norm))
        throw NumericAbort("non-finite gradient at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ", batch " + std::to_string(b));
      const double lr = lr_at(step, cfg);
      optimizer_step(params.tensors(), grads, lr);
      ++step;
      sums.ce += loss.breakdown.ce;
      sums.mse += loss.breakdown.mse;
      sums.contrastive += loss.breakdown.contrastive;
      sums.total += loss.breakdown.total;
      if (hooks.on_step && cfg.logging_steps > 0 && step % cfg.logging_steps == 0) hooks.on_step(step, lr, loss.breakdown);
    }

    EpochLog entry;
    entry.epoch = epoch;
    const double n = static_cast<double>(main.batches.size());
    entry.train = {sums.ce / n, sums.mse / n, sums.contrastive / n, sums.total / n};
    if (!eval_recs.empty()) {
      std::vector<DimensionScores> preds;
      for (const auto& r : eval_recs) preds.push_back(predict_record(params, rubric, r));
      entry.eval = evaluate_corpus(preds, eval_corpus, "eval", "epoch-" + std::to_string(epoch));
    }
    if (hooks.on_epoch) hooks.on_epoch(entry);
    result.log.push_back(std::move(entry));
  }
  result.checkpoint = Checkpoint{std::move(params), vocab, rubric, cfg, step, kCheckpointVersion};
  return result;
}

/// Training log as CSV: epoch,ce,mse,contrastive,total,<dim>_qwk,...
inline std::string render_train_log(const std::vector<EpochLog>& log, const RubricSpec& rubric) {
  csv::Row header{"epoch", "ce", "mse", "contrastive", "total"};
  for (const auto& d : rubric.dimensions) header.push_back(d + "_qwk");
  std::string out = csv::format_row(header);
  for (const auto& e : log) {
    csv::Row row{std::to_string(e.epoch), format_double(e.train.ce), format_double(e.train.mse),
                 format_double(e.train.contrastive), format_double(e.train.total)};
    for (std::size_t d = 0; d < rubric.num_dimensions(); ++d)
      row.push_back(e.eval ? format_double(e.eval->rows[d].qwk) : "");
    out += csv::format_row(row);
  }
  return out;
}

}  // namespace aems
