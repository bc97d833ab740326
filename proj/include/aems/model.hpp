// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aems/autodiff.hpp"
#include "aems/batching.hpp"
#include "aems/corpus.hpp"
#include "aems/encoder.hpp"
#include "aems/heads.hpp"
#include "aems/loss.hpp"
#include "aems/vocab.hpp"

namespace aems {

/// A corpus record tokenized once for repeated training passes.
struct EncodedRecord {
  std::string id;
  TokenIds essay;
  std::optional<TokenIds> prompt;
  std::optional<std::string> prompt_key;
  std::vector<std::size_t> gold_bands;
  Tensor gold_scores;
};

inline std::vector<EncodedRecord> encode_corpus(const Corpus& c, const Vocab& vocab, std::size_t max_seq_len) {
  std::vector<EncodedRecord> out;
  out.reserve(c.size());
  for (const EssayRecord& rec : c.records) {
    EncodedRecord e;
    e.id = rec.id;
    e.essay = tokenize(rec.full_text, vocab, max_seq_len);
    if (rec.prompt) {
      e.prompt = tokenize(*rec.prompt, vocab, max_seq_len);
      e.prompt_key = *rec.prompt;
    }
    for (double s : rec.scores) {
      auto idx = c.rubric.band_index(s);
      if (!idx) throw DataError("essay '" + rec.id + "' has an illegal band");
      e.gold_bands.push_back(*idx);
    }
    e.gold_scores = Tensor::vector(rec.scores);
    out.push_back(std::move(e));
  }
  return out;
}

struct BatchLoss {
  Var total;
  LossBreakdown breakdown;
};

namespace model_detail {

// Prompt representations are computed once per distinct prompt per graph.
class PromptCache {
 public:
  explicit PromptCache(const BoundModel& m) : m_(m) {}

  Var get(const EncodedRecord& r) {
    auto it = cache_.find(*r.prompt_key);
    if (it != cache_.end()) return it->second;
    Var v = encode_additional(m_, *r.prompt);
    cache_.emplace(*r.prompt_key, v);
    return v;
  }

 private:
  const BoundModel& m_;
  std::map<std::string, Var> cache_;
};

}  // namespace model_detail

/// Three-term objective on one batch:
///   ce          mean over essays and dimensions of -log softmax(z_d)[gold_d]
///   mse         mean over essays and dimensions of (y_d - gold_d)^2
///   contrastive NT-Xent over (cls ⊕ prompt) of the same-prompt pairs
/// The contrastive batch may be the main batch itself (pass nullptr) or an
/// independent draw. Records without a prompt pair with a zero prompt half.
inline BatchLoss batch_loss(const BoundModel& m, std::span<const EncodedRecord> records, const Batch& main,
                            const Batch* contrastive_batch, const LossWeights& w) {
  Graph& g = *m.graph;
  if (main.records.empty()) throw UsageError("batch_loss on an empty batch");
  std::vector<Var> ce_terms, sq_terms;
  std::map<std::size_t, Var> cls_of;
  std::size_t dims = 0;
  for (std::size_t pos = 0; pos < main.records.size(); ++pos) {
    const EncodedRecord& r = records[main.records[pos]];
    Var cls = encode(m, r.essay);
    cls_of.emplace(main.records[pos], cls);
    const auto logits = classify(cls, m);
    dims = logits.size();
    for (std::size_t d = 0; d < logits.size(); ++d) ce_terms.push_back(cross_entropy_logits(logits[d], r.gold_bands[d]));
    sq_terms.push_back(squared_error_sum(regress(cls, m), r.gold_scores));
  }
  const double denom = static_cast<double>(main.records.size() * dims);
  Var ce = scale(sum(stack(ce_terms)), 1.0 / denom);
  Var mse_v = scale(sum(stack(sq_terms)), 1.0 / denom);

  Var contrastive = g.constant(Tensor::scalar(0.0));
  const Batch& cb = contrastive_batch ? *contrastive_batch : main;
  if (w.lambda_contrastive > 0.0 && !cb.pairs.empty()) {
    model_detail::PromptCache prompts(m);
    std::vector<Var> reprs;
    PositivePairs pairs;
    for (const auto& [a, b] : cb.pairs) {
      for (std::size_t pos : {a, b}) {
        const std::size_t idx = cb.records[pos];
        const EncodedRecord& r = records[idx];
        auto it = cls_of.find(idx);
        Var cls = it != cls_of.end() ? it->second : cls_of.emplace(idx, encode(m, r.essay)).first->second;
        Var extra = r.prompt ? prompts.get(r) : g.constant(Tensor({cls.size()}));
        reprs.push_back(combine_repr(cls, extra));
      }
      pairs.emplace_back(reprs.size() - 2, reprs.size() - 1);
    }
    contrastive = nt_xent(reprs, pairs, w.temperature);
  }
  Var total = combined_loss(ce, mse_v, contrastive, w);
  return {total, {ce.value().item(), mse_v.value().item(), contrastive.value().item(), total.value().item()}};
}

/// Inference for one encoded record.
inline DimensionScores predict_record(const ModelParams& p, const RubricSpec& rubric, const EncodedRecord& r) {
  Graph g;
  BoundModel m = bind(g, p, false);
  Var cls = encode(m, r.essay);
  std::vector<Tensor> logits;
  for (Var z : classify(cls, m)) logits.push_back(z.value());
  const Tensor reg = regress(cls, m).value();
  DimensionScores s;
  s.essay_id = r.id;
  s.empty_input = r.essay.empty_input;
  s.dimensions = predict_scores(logits, reg.values(), rubric);
  return s;
}

inline std::vector<DimensionScores> predict_corpus(const ModelParams& p, const Vocab& vocab, const Corpus& c) {
  std::vector<DimensionScores> out;
  for (const auto& r : encode_corpus(c, vocab, p.config().max_seq_len)) out.push_back(predict_record(p, c.rubric, r));
  return out;
}

inline DimensionScores score_text(const ModelParams& p, const Vocab& vocab, const RubricSpec& rubric,
                                  const std::string& essay) {
  EncodedRecord r;
  r.id = "input";
  r.essay = tokenize(essay, vocab, p.config().max_seq_len);
  return predict_record(p, rubric, r);
}

}  // namespace aems
