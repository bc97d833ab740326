// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "aems/train_config.hpp"

using namespace aems;

TEST(LrAt, WarmupExamples) {
  const TrainConfig c = roberta_style();
  EXPECT_DOUBLE_EQ(lr_at(0, c), 4e-8);
  EXPECT_DOUBLE_EQ(lr_at(250, c), 2e-5 * 251.0 / 500.0);
  EXPECT_NEAR(lr_at(250, c), 1.004e-5, 1e-18);
  EXPECT_EQ(lr_at(500, c), 2e-5);
  EXPECT_EQ(lr_at(100000, c), 2e-5);
}

TEST(LrAtProperty, NondecreasingThenConstant) {
  TrainConfig c = roberta_style();
  for (std::size_t warm : {1u, 7u, 500u}) {
    c.warmup_steps = warm;
    double prev = 0.0;
    for (std::size_t s = 0; s < warm + 50; ++s) {
      const double lr = lr_at(s, c);
      EXPECT_GE(lr, prev);
      EXPECT_LE(lr, c.learning_rate);
      if (s + 1 >= warm) {
        EXPECT_EQ(lr, c.learning_rate);
      }
      prev = lr;
    }
  }
}

TEST(Presets, RobertaStyle) {
  const TrainConfig c = *train_preset("roberta-style");
  EXPECT_EQ(c.num_train_epochs, 28u);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.eval_batch_size, 16u);
  EXPECT_EQ(c.warmup_steps, 500u);
  EXPECT_EQ(c.learning_rate, 2e-5);
  EXPECT_EQ(c.contrastive_batch_size, 128u);
  EXPECT_EQ(c.logging_steps, 10u);
  EXPECT_EQ(c.evaluation_strategy, "epoch");
}

TEST(Presets, DistilbertStyle) {
  const TrainConfig c = *train_preset("distilbert-style");
  EXPECT_EQ(c.num_train_epochs, 22u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.eval_batch_size, 64u);
  EXPECT_EQ(c.warmup_steps, 500u);
  EXPECT_EQ(c.learning_rate, 2e-5);
  EXPECT_EQ(c.contrastive_batch_size, 130u);
  EXPECT_EQ(c.logging_steps, 10u);
}

TEST(Presets, UnknownNameIsAbsent) { EXPECT_FALSE(train_preset("bert-large")); }

TEST(DeskScaled, DividesStepAndBatchSettings) {
  const TrainConfig c = desk_scaled(roberta_style(), 10);
  EXPECT_EQ(c.warmup_steps, 50u);
  EXPECT_EQ(c.batch_size, 2u);
  EXPECT_EQ(c.contrastive_batch_size, 13u);
  EXPECT_EQ(c.num_train_epochs, 28u);
  EXPECT_EQ(c.learning_rate, 2e-5);
  EXPECT_EQ(desk_scaled(roberta_style(), 1), roberta_style());
  EXPECT_THROW(desk_scaled(roberta_style(), 0), ConfigError);
}

TEST(ParseTrainConfig, PresetWithOverrides) {
  const TrainConfig c = parse_train_config(KeyValueConfig::parse(
      "preset = distilbert-style\nlearning_rate = 0.25\nlambda_contrastive = 0\nd_model = 32\nn_heads = 2\n"));
  EXPECT_EQ(c.preset, "distilbert-style");
  EXPECT_EQ(c.num_train_epochs, 22u);
  EXPECT_EQ(c.learning_rate, 0.25);
  EXPECT_EQ(c.loss.lambda_contrastive, 0.0);
  EXPECT_EQ(c.encoder.d_model, 32u);
}

TEST(ParseTrainConfig, Defaults) {
  const TrainConfig c = parse_train_config(KeyValueConfig::parse(""));
  EXPECT_EQ(c.loss.lambda_mse, 1.0);
  EXPECT_EQ(c.loss.lambda_contrastive, 0.1);
  EXPECT_EQ(c.loss.temperature, 0.5);
  EXPECT_EQ(c.max_grad_norm, 1.0);
}

TEST(ParseTrainConfig, Rejections) {
  EXPECT_THROW(parse_train_config(KeyValueConfig::parse("epochs = 3\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueConfig::parse("preset = huge\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueConfig::parse("learning_rate = fast\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueConfig::parse("num_train_epochs = 0\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueConfig::parse("temperature = 0\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueConfig::parse("contrastive_learning_batch_size = 1\n")), ConfigError);
  EXPECT_THROW(parse_train_config(KeyValueConfig::parse("evaluation_strategy = steps\n")), ConfigError);
}

TEST(ResolveTrainConfig, PresetNameOrFile) {
  EXPECT_EQ(resolve_train_config("roberta-style"), roberta_style());
  const auto path = std::filesystem::temp_directory_path() / "aems_train_config_test.cfg";
  std::ofstream(path) << "# desk run\npreset = roberta-style\ndesk_scale = 4\n";
  const TrainConfig c = resolve_train_config(path.string());
  EXPECT_EQ(c.warmup_steps, 125u);
  EXPECT_EQ(c.batch_size, 4u);
  std::filesystem::remove(path);
  EXPECT_THROW(resolve_train_config("/nonexistent/config.cfg"), ConfigError);
}

TEST(TrainConfigJson, RoundTrip) {
  TrainConfig c = distilbert_style();
  c.learning_rate = 0.1 + 0.2;
  c.seed = 123456789012345ull;
  c.encoder.vocab_size = 777;
  EXPECT_EQ(train_config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
}

TEST(Describe, OneLinePerKey) {
  const std::string d = describe(roberta_style());
  EXPECT_NE(d.find("num_train_epochs = 28\n"), std::string::npos);
  EXPECT_NE(d.find("learning_rate = 2e-05\n"), std::string::npos);
  EXPECT_NE(d.find("contrastive_learning_batch_size = 128\n"), std::string::npos);
}
