// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "aems/config.hpp"
#include "aems/corpus.hpp"
#include "aems/encoder.hpp"
#include "aems/error.hpp"
#include "aems/loss.hpp"

namespace aems {

struct TrainConfig {
  std::string preset = "custom";
  std::size_t num_train_epochs = 28;
  std::size_t batch_size = 16;
  std::size_t eval_batch_size = 16;
  std::size_t warmup_steps = 500;
  double learning_rate = 2e-5;
  std::size_t contrastive_batch_size = 128;
  std::size_t logging_steps = 10;
  std::string evaluation_strategy = "epoch";
  LossWeights loss;
  std::uint64_t seed = 42;
  double max_grad_norm = 1.0;
  std::size_t vocab_max_size = 5000;
  EncoderConfig encoder;

  void validate() const {
    if (num_train_epochs == 0) throw ConfigError("num_train_epochs must be positive");
    if (batch_size == 0 || eval_batch_size == 0) throw ConfigError("batch sizes must be positive");
    if (warmup_steps == 0) throw ConfigError("warmup_steps must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (contrastive_batch_size == 0) throw ConfigError("contrastive batch size must be positive");
    if (loss.lambda_contrastive > 0.0 && contrastive_batch_size < 2)
      throw ConfigError("contrastive batch size must be >= 2 when lambda_contrastive > 0");
    if (evaluation_strategy != "epoch") throw ConfigError("only evaluation_strategy = epoch is supported");
    if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
    if (vocab_max_size <= kReservedTokens) throw ConfigError("vocab_size must exceed the reserved ids");
    loss.validate();
  }

  bool operator==(const TrainConfig&) const = default;
};

/// Configuration published for the RoBERTa-based model.
inline TrainConfig roberta_style() {
  TrainConfig c;
  c.preset = "roberta-style";
  c.num_train_epochs = 28;
  c.batch_size = 16;
  c.eval_batch_size = 16;
  c.warmup_steps = 500;
  c.logging_steps = 10;
  c.learning_rate = 2e-5;
  c.contrastive_batch_size = 128;
  return c;
}

/// Configuration published for the DistilBERT-based model.
inline TrainConfig distilbert_style() {
  TrainConfig c;
  c.preset = "distilbert-style";
  c.num_train_epochs = 22;
  c.batch_size = 64;
  c.eval_batch_size = 64;
  c.warmup_steps = 500;
  c.logging_steps = 10;
  c.learning_rate = 2e-5;
  c.contrastive_batch_size = 130;
  return c;
}

inline std::optional<TrainConfig> train_preset(const std::string& name) {
  if (name == "roberta-style") return roberta_style();
  if (name == "distilbert-style") return distilbert_style();
  return std::nullopt;
}

/// Shrinks step- and batch-denominated settings by `divisor` for small
/// corpora; epochs and learning rate are left alone.
inline TrainConfig desk_scaled(TrainConfig c, std::size_t divisor) {
  if (divisor == 0) throw ConfigError("desk scale divisor must be positive");
  if (divisor == 1) return c;
  auto shrink = [divisor](std::size_t v, std::size_t floor) { return std::max(floor, (v + divisor - 1) / divisor); };
  c.warmup_steps = shrink(c.warmup_steps, 1);
  c.batch_size = shrink(c.batch_size, 2);
  c.eval_batch_size = shrink(c.eval_batch_size, 1);
  c.contrastive_batch_size = shrink(c.contrastive_batch_size, 2);
  return c;
}

/// Linear warmup to the base rate, constant afterwards.
inline double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step < cfg.warmup_steps)
    return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  return cfg.learning_rate;
}

/// Reads `key = value` overrides. A `preset` key selects the starting point;
/// `desk_scale` applies desk_scaled() before the remaining keys.
inline TrainConfig parse_train_config(const KeyValueConfig& kv) {
  kv.reject_unknown({"preset", "desk_scale", "num_train_epochs", "batch_size", "per_device_eval_batch_size",
                     "warmup_steps", "learning_rate", "contrastive_learning_batch_size", "logging_steps",
                     "evaluation_strategy", "lambda_mse", "lambda_contrastive", "temperature", "seed",
                     "max_grad_norm", "vocab_size", "max_seq_len", "d_model", "n_layers", "n_heads", "d_ff"});
  TrainConfig c;
  if (kv.has("preset")) {
    auto p = train_preset(kv.require("preset"));
    if (!p) throw ConfigError("unknown preset '" + kv.require("preset") + "'");
    c = *p;
  }
  auto positive = [&](const std::string& key) {
    const long long v = parse_int(kv.require(key), key);
    if (v < 0) throw ConfigError("'" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
  };
  auto real = [&](const std::string& key) { return parse_double(kv.require(key), key); };
  if (kv.has("desk_scale")) c = desk_scaled(c, positive("desk_scale"));
  if (kv.has("num_train_epochs")) c.num_train_epochs = positive("num_train_epochs");
  if (kv.has("batch_size")) c.batch_size = positive("batch_size");
  if (kv.has("per_device_eval_batch_size")) c.eval_batch_size = positive("per_device_eval_batch_size");
  if (kv.has("warmup_steps")) c.warmup_steps = positive("warmup_steps");
  if (kv.has("learning_rate")) c.learning_rate = real("learning_rate");
  if (kv.has("contrastive_learning_batch_size")) c.contrastive_batch_size = positive("contrastive_learning_batch_size");
  if (kv.has("logging_steps")) c.logging_steps = positive("logging_steps");
  if (kv.has("evaluation_strategy")) c.evaluation_strategy = kv.require("evaluation_strategy");
  if (kv.has("lambda_mse")) c.loss.lambda_mse = real("lambda_mse");
  if (kv.has("lambda_contrastive")) c.loss.lambda_contrastive = real("lambda_contrastive");
  if (kv.has("temperature")) c.loss.temperature = real("temperature");
  if (kv.has("seed")) c.seed = positive("seed");
  if (kv.has("max_grad_norm")) c.max_grad_norm = real("max_grad_norm");
  if (kv.has("vocab_size")) c.vocab_max_size = positive("vocab_size");
  if (kv.has("max_seq_len")) c.encoder.max_seq_len = positive("max_seq_len");
  if (kv.has("d_model")) c.encoder.d_model = positive("d_model");
  if (kv.has("n_layers")) c.encoder.n_layers = positive("n_layers");
  if (kv.has("n_heads")) c.encoder.n_heads = positive("n_heads");
  if (kv.has("d_ff")) c.encoder.d_ff = positive("d_ff");
  c.validate();
  return c;
}

/// Preset name or path to a config file.
inline TrainConfig resolve_train_config(const std::string& name_or_path) {
  if (auto p = train_preset(name_or_path)) return *p;
  return parse_train_config(KeyValueConfig::from_file(name_or_path));
}

inline nlohmann::json to_json(const EncoderConfig& e) {
  return {{"vocab_size", e.vocab_size}, {"max_seq_len", e.max_seq_len}, {"d_model", e.d_model},
          {"n_layers", e.n_layers},     {"n_heads", e.n_heads},         {"d_ff", e.d_ff}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig e;
  e.vocab_size = j.at("vocab_size").get<std::size_t>();
  e.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  e.d_model = j.at("d_model").get<std::size_t>();
  e.n_layers = j.at("n_layers").get<std::size_t>();
  e.n_heads = j.at("n_heads").get<std::size_t>();
  e.d_ff = j.at("d_ff").get<std::size_t>();
  return e;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"preset", c.preset},
          {"num_train_epochs", c.num_train_epochs},
          {"batch_size", c.batch_size},
          {"per_device_eval_batch_size", c.eval_batch_size},
          {"warmup_steps", c.warmup_steps},
          {"learning_rate", c.learning_rate},
          {"contrastive_learning_batch_size", c.contrastive_batch_size},
          {"logging_steps", c.logging_steps},
          {"evaluation_strategy", c.evaluation_strategy},
          {"lambda_mse", c.loss.lambda_mse},
          {"lambda_contrastive", c.loss.lambda_contrastive},
          {"temperature", c.loss.temperature},
          {"seed", c.seed},
          {"max_grad_norm", c.max_grad_norm},
          {"vocab_size", c.vocab_max_size},
          {"encoder", to_json(c.encoder)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.preset = j.at("preset").get<std::string>();
  c.num_train_epochs = j.at("num_train_epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.eval_batch_size = j.at("per_device_eval_batch_size").get<std::size_t>();
  c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.contrastive_batch_size = j.at("contrastive_learning_batch_size").get<std::size_t>();
  c.logging_steps = j.at("logging_steps").get<std::size_t>();
  c.evaluation_strategy = j.at("evaluation_strategy").get<std::string>();
  c.loss.lambda_mse = j.at("lambda_mse").get<double>();
  c.loss.lambda_contrastive = j.at("lambda_contrastive").get<double>();
  c.loss.temperature = j.at("temperature").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_grad_norm = j.at("max_grad_norm").get<double>();
  c.vocab_max_size = j.at("vocab_size").get<std::size_t>();
  c.encoder = encoder_config_from_json(j.at("encoder"));
  return c;
}

/// Human-readable dump used by the CLI before it acts.
inline std::string describe(const TrainConfig& c) {
  std::ostringstream os;
  os << "preset = " << c.preset << "\n"
     << "num_train_epochs = " << c.num_train_epochs << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "per_device_eval_batch_size = " << c.eval_batch_size << "\n"
     << "warmup_steps = " << c.warmup_steps << "\n"
     << "learning_rate = " << format_double(c.learning_rate) << "\n"
     << "contrastive_learning_batch_size = " << c.contrastive_batch_size << "\n"
     << "logging_steps = " << c.logging_steps << "\n"
     << "evaluation_strategy = " << c.evaluation_strategy << "\n"
     << "lambda_mse = " << format_double(c.loss.lambda_mse) << "\n"
     << "lambda_contrastive = " << format_double(c.loss.lambda_contrastive) << "\n"
     << "temperature = " << format_double(c.loss.temperature) << "\n"
     << "seed = " << c.seed << "\n"
     << "max_grad_norm = " << format_double(c.max_grad_norm) << "\n"
     << "vocab_size = " << c.vocab_max_size << "\n"
     << "max_seq_len = " << c.encoder.max_seq_len << "\n"
     << "d_model = " << c.encoder.d_model << "\n"
     << "n_layers = " << c.encoder.n_layers << "\n"
     << "n_heads = " << c.encoder.n_heads << "\n"
     << "d_ff = " << c.encoder.d_ff << "\n";
  return os.str();
}

}  // namespace aems
