// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "aems/synth.hpp"
#include "aems/trainer.hpp"

using namespace aems;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.preset = "test";
  c.num_train_epochs = 3;
  c.batch_size = 4;
  c.eval_batch_size = 4;
  c.contrastive_batch_size = 4;
  c.warmup_steps = 5;
  c.learning_rate = 0.1;
  c.encoder.d_model = 16;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.encoder.d_ff = 32;
  c.encoder.max_seq_len = 96;
  return c;
}

}  // namespace

TEST(Train, SameSeedGivesIdenticalCheckpointBytes) {
  const Corpus c = synth_corpus(16, ellipse_rubric(), 1);
  const Corpus e = synth_corpus(10, ellipse_rubric(), 2);
  const TrainResult a = train(tiny_config(), c, e);
  const TrainResult b = train(tiny_config(), c, e);
  EXPECT_EQ(serialize_checkpoint(a.checkpoint), serialize_checkpoint(b.checkpoint));
  EXPECT_EQ(render_train_log(a.log, c.rubric), render_train_log(b.log, c.rubric));
  TrainConfig other = tiny_config();
  other.seed = 43;
  EXPECT_NE(serialize_checkpoint(train(other, c, e).checkpoint), serialize_checkpoint(a.checkpoint));
}

TEST(Train, SeparateContrastiveStreamIsDeterministic) {
  const Corpus c = synth_corpus(16, ellipse_rubric(), 1, {.num_prompts = 3});
  TrainConfig cfg = tiny_config();
  cfg.num_train_epochs = 2;
  cfg.contrastive_batch_size = 6;
  EXPECT_EQ(serialize_checkpoint(train(cfg, c, {}).checkpoint), serialize_checkpoint(train(cfg, c, {}).checkpoint));
}

TEST(Train, LogsEveryEpochWithFiniteLosses) {
  const Corpus c = synth_corpus(16, ellipse_rubric(), 1);
  const Corpus e = synth_corpus(10, ellipse_rubric(), 2);
  std::size_t steps_seen = 0, epochs_seen = 0;
  TrainHooks hooks;
  TrainConfig cfg = tiny_config();
  cfg.logging_steps = 2;
  hooks.on_step = [&](std::size_t step, double lr, const LossBreakdown& l) {
    EXPECT_EQ(step % 2, 0u);
    EXPECT_EQ(lr, lr_at(step - 1, cfg));
    EXPECT_TRUE(std::isfinite(l.total));
    ++steps_seen;
  };
  hooks.on_epoch = [&](const EpochLog&) { ++epochs_seen; };
  const TrainResult r = train(cfg, c, e, hooks);
  ASSERT_EQ(r.log.size(), 3u);
  EXPECT_EQ(epochs_seen, 3u);
  EXPECT_GE(r.checkpoint.step, 12u);  // prompt pairing can leave a short extra batch
  EXPECT_EQ(steps_seen, r.checkpoint.step / 2);
  for (const auto& ep : r.log) {
    EXPECT_TRUE(std::isfinite(ep.train.total));
    EXPECT_NEAR(ep.train.total,
                ep.train.ce + cfg.loss.lambda_mse * ep.train.mse + cfg.loss.lambda_contrastive * ep.train.contrastive,
                1e-9);
    ASSERT_TRUE(ep.eval);
    EXPECT_EQ(ep.eval->rows.size(), 6u);
  }
}

TEST(Train, LogCsvLayout) {
  const Corpus c = synth_corpus(16, ellipse_rubric(), 1);
  const TrainResult r = train(tiny_config(), c, synth_corpus(10, ellipse_rubric(), 2));
  const auto rows = csv::parse(render_train_log(r.log, c.rubric));
  ASSERT_GE(rows.size(), 4u);
  EXPECT_EQ(rows[0], (csv::Row{"epoch", "ce", "mse", "contrastive", "total", "cohesion_qwk", "syntax_qwk",
                               "vocabulary_qwk", "phraseology_qwk", "grammar_qwk", "conventions_qwk"}));
  EXPECT_EQ(rows[1][0], "1");
  EXPECT_EQ(rows[3][0], "3");
}

TEST(Train, NoEvalCorpusLeavesEvalEmpty) {
  const TrainResult r = train(tiny_config(), synth_corpus(16, ellipse_rubric(), 1), {});
  for (const auto& ep : r.log) EXPECT_FALSE(ep.eval);
}

TEST(Train, VocabularyComesFromTrainingSplitOnly) {
  Corpus c = synth_corpus(16, ellipse_rubric(), 1);
  Corpus e = synth_corpus(10, ellipse_rubric(), 2);
  e.records[0].full_text += " zyzzyva";
  const TrainResult r = train(tiny_config(), c, e);
  EXPECT_FALSE(r.checkpoint.vocab.contains("zyzzyva"));
}

TEST(Train, DivergenceAbortsNamingStepAndBatch) {
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = 1e300;
  cfg.warmup_steps = 1;
  try {
    (void)train(cfg, synth_corpus(16, ellipse_rubric(), 1), {});
    FAIL() << "expected a numeric abort";
  } catch (const NumericAbort& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Train, MismatchedRubricsRejected) {
  EXPECT_THROW(train(tiny_config(), synth_corpus(16, ellipse_rubric(), 1), synth_corpus(10, ielts_rubric(), 1)),
               DataError);
}

TEST(Train, WarnsWhenNoPromptIsShared) {
  Corpus c = synth_corpus(16, ellipse_rubric(), 1);
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) c.records[i].prompt_id = "solo-" + std::to_string(i);
  std::vector<std::string> warnings;
  TrainHooks hooks;
  hooks.warn = [&](const std::string& w) { warnings.push_back(w); };
  TrainConfig cfg = tiny_config();
  cfg.num_train_epochs = 2;
  const TrainResult r = train(cfg, c, {}, hooks);
  ASSERT_EQ(warnings.size(), 1u);
  for (const auto& ep : r.log) EXPECT_EQ(ep.train.contrastive, 0.0);
}

// Without the contrastive term, prompt pairing inside a batch has no effect
// on the loss or on any gradient.
TEST(TrainProperty, PairingIrrelevantWithoutContrastiveTerm) {
  const Corpus c = synth_corpus(16, ellipse_rubric(), 3, {.num_prompts = 2});
  TrainConfig cfg = tiny_config();
  cfg.loss.lambda_contrastive = 0.0;
  const Vocab v = build_vocab(c, 500);
  EncoderConfig enc = cfg.encoder;
  enc.vocab_size = v.size();
  const ModelParams p = ModelParams::initialize(enc, c.rubric, 1);
  const auto recs = encode_corpus(c, v, enc.max_seq_len);
  const BatchSequence paired = make_batches(c, 8, 5, true);
  for (const Batch& b : paired.batches) {
    Batch unpaired{b.records, {}};
    Graph g1, g2;
    BoundModel m1 = bind(g1, p), m2 = bind(g2, p);
    const BatchLoss l1 = batch_loss(m1, recs, b, nullptr, cfg.loss);
    const BatchLoss l2 = batch_loss(m2, recs, unpaired, nullptr, cfg.loss);
    EXPECT_EQ(l1.breakdown.total, l2.breakdown.total);
    g1.backward(l1.total);
    g2.backward(l2.total);
    for (std::size_t i = 0; i < m1.all.size(); ++i) EXPECT_EQ(g1.grad(m1.all[i]), g2.grad(m2.all[i]));
  }
}

TEST(TrainProperty, MainBatchesPairedWhenSizesMatch) {
  const Corpus c = synth_corpus(16, ellipse_rubric(), 3, {.num_prompts = 2});
  TrainConfig cfg = tiny_config();
  cfg.num_train_epochs = 1;
  const TrainResult r = train(cfg, c, {});
  EXPECT_GT(r.log[0].train.contrastive, 0.0);
}

TEST(Train, OverfitsSixteenEssays) {
  const Corpus c = synth_corpus(16, ellipse_rubric(), 21);
  TrainConfig cfg = tiny_config();
  cfg.loss.lambda_mse = 0.0;
  cfg.loss.lambda_contrastive = 0.0;
  cfg.num_train_epochs = 500;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.3;
  cfg.warmup_steps = 10;
  double best = 1e9;
  std::size_t reached = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    best = std::min(best, e.train.ce);
    if (!reached && e.train.ce < 0.05) reached = e.epoch;
  };
  (void)train(cfg, c, {}, hooks);
  EXPECT_GT(reached, 0u) << "lowest CE " << best;
}
