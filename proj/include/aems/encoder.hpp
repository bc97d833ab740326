// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aems/autodiff.hpp"
#include "aems/error.hpp"
#include "aems/rubric.hpp"
#include "aems/vocab.hpp"

namespace aems {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 256;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;

  void validate() const {
    if (vocab_size <= kReservedTokens) throw ConfigError("vocab_size must exceed the reserved ids");
    if (max_seq_len < 2) throw ConfigError("max_seq_len must be at least 2");
    if (d_model == 0 || n_heads == 0 || d_ff == 0) throw ConfigError("encoder widths must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Every encoder and head parameter, in a fixed canonical order.
class ModelParams {
 public:
  ModelParams() = default;

  /// Random initialization: embeddings N(0,1); projections N(0, 1/fan_in);
  /// layer-norm gains 1; biases 0 except the regression bias, which starts
  /// at the middle of the band scale.
  static ModelParams initialize(const EncoderConfig& cfg, const RubricSpec& rubric, std::uint64_t seed) {
    cfg.validate();
    rubric.validate();
    ModelParams p;
    p.config_ = cfg;
    std::mt19937_64 rng(seed);
    auto normal = [&rng](Shape shape, double stddev) {
      Tensor t(std::move(shape));
      std::normal_distribution<double> dist(0.0, stddev);
      for (double& v : t.values()) v = dist(rng);
      return t;
    };
    const std::size_t d = cfg.d_model;
    const double proj = 1.0 / std::sqrt(static_cast<double>(d));
    const double ff_out = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
    p.add("embed", normal({cfg.vocab_size, d}, 1.0));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      p.add(pre + "ln1.gain", Tensor({d}, 1.0));
      p.add(pre + "ln1.bias", Tensor({d}));
      for (const char* m : {"q", "k", "v", "o"}) {
        p.add(pre + "attn.w" + m, normal({d, d}, proj));
        p.add(pre + "attn.b" + m, Tensor({d}));
      }
      p.add(pre + "ln2.gain", Tensor({d}, 1.0));
      p.add(pre + "ln2.bias", Tensor({d}));
      p.add(pre + "ff.w1", normal({d, cfg.d_ff}, proj));
      p.add(pre + "ff.b1", Tensor({cfg.d_ff}));
      p.add(pre + "ff.w2", normal({cfg.d_ff, d}, ff_out));
      p.add(pre + "ff.b2", Tensor({d}));
    }
    p.add("final_ln.gain", Tensor({d}, 1.0));
    p.add("final_ln.bias", Tensor({d}));
    const std::size_t k = rubric.num_bands();
    for (const auto& dim : rubric.dimensions) {
      p.add("head.cls." + dim + ".weight", normal({k, d}, proj));
      p.add("head.cls." + dim + ".bias", Tensor({k}));
    }
    const std::size_t dims = rubric.num_dimensions();
    p.add("head.reg.weight", normal({dims, d}, proj));
    p.add("head.reg.bias", Tensor({dims}, 0.5 * (rubric.min_band() + rubric.max_band())));
    return p;
  }

  /// Reassembles from serialized parts; shapes are checked against `cfg`.
  static ModelParams from_parts(const EncoderConfig& cfg, const RubricSpec& rubric,
                                std::vector<std::string> names, std::vector<Tensor> tensors) {
    ModelParams expected = initialize(cfg, rubric, 0);
    if (names != expected.names_)
      throw DataError("parameter names do not match the encoder configuration");
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].shape() != expected.tensors_[i].shape())
        throw DataError("parameter '" + names[i] + "' has shape " + shape_str(tensors[i].shape()) +
                        ", expected " + shape_str(expected.tensors_[i].shape()));
    expected.tensors_ = std::move(tensors);
    return expected;
  }

  [[nodiscard]] const EncoderConfig& config() const { return config_; }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
  [[nodiscard]] const std::vector<Tensor>& tensors() const { return tensors_; }
  [[nodiscard]] std::vector<Tensor>& tensors() { return tensors_; }
  [[nodiscard]] std::size_t count() const { return tensors_.size(); }

  [[nodiscard]] std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second;
  }
  [[nodiscard]] const Tensor& get(const std::string& name) const { return tensors_[index(name)]; }
  Tensor& get(const std::string& name) { return tensors_[index(name)]; }

  [[nodiscard]] std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  bool operator==(const ModelParams& o) const {
    return config_ == o.config_ && names_ == o.names_ && tensors_ == o.tensors_;
  }

 private:
  void add(std::string name, Tensor t) {
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(t));
  }

  EncoderConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Parameters registered on a graph, grouped by role.
struct BoundModel {
  struct Layer {
    Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  Graph* graph = nullptr;
  const ModelParams* params = nullptr;
  std::vector<Var> all;  // canonical order
  Var embed;
  std::vector<Layer> layers;
  Var final_gain, final_bias;
  std::vector<Var> cls_weight, cls_bias;
  Var reg_weight, reg_bias;
};

/// Wires caller-registered parameter nodes (canonical order) into a model.
inline BoundModel bind(Graph& g, const ModelParams& p, std::span<const Var> vars) {
  if (vars.size() != p.count())
    throw UsageError("bind needs " + std::to_string(p.count()) + " parameter nodes, got " +
                     std::to_string(vars.size()));
  BoundModel m;
  m.graph = &g;
  m.params = &p;
  m.all.assign(vars.begin(), vars.end());
  auto v = [&](const std::string& name) { return m.all[p.index(name)]; };
  m.embed = v("embed");
  for (std::size_t l = 0; l < p.config().n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    m.layers.push_back({v(pre + "ln1.gain"), v(pre + "ln1.bias"), v(pre + "attn.wq"), v(pre + "attn.bq"),
                        v(pre + "attn.wk"), v(pre + "attn.bk"), v(pre + "attn.wv"), v(pre + "attn.bv"),
                        v(pre + "attn.wo"), v(pre + "attn.bo"), v(pre + "ln2.gain"), v(pre + "ln2.bias"),
                        v(pre + "ff.w1"), v(pre + "ff.b1"), v(pre + "ff.w2"), v(pre + "ff.b2")});
  }
  m.final_gain = v("final_ln.gain");
  m.final_bias = v("final_ln.bias");
  for (const auto& name : p.names())
    if (name.starts_with("head.cls.")) {
      if (name.ends_with(".weight"))
        m.cls_weight.push_back(v(name));
      else
        m.cls_bias.push_back(v(name));
    }
  m.reg_weight = v("head.reg.weight");
  m.reg_bias = v("head.reg.bias");
  return m;
}

/// Registers parameters as differentiable leaves (or constants for inference).
inline BoundModel bind(Graph& g, const ModelParams& p, bool trainable = true) {
  std::vector<Var> vars;
  vars.reserve(p.count());
  for (const Tensor& t : p.tensors()) vars.push_back(trainable ? g.leaf(t) : g.constant(t));
  return aems::bind(g, p, std::span<const Var>(vars));
}

namespace encoder_detail {

inline Tensor sinusoid_table(std::size_t len, std::size_t d) {
  Tensor pe({len, d});
  for (std::size_t pos = 0; pos < len; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

}  // namespace encoder_detail

/// Sinusoidal position table [len x d]; tables are cached per (len, d).
inline const Tensor& positional_encoding(std::size_t len, std::size_t d) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, Tensor> cache;
  std::lock_guard lock(mu);
  auto it = cache.find({len, d});
  if (it == cache.end()) it = cache.emplace(std::pair{len, d}, encoder_detail::sinusoid_table(len, d)).first;
  return it->second;
}

namespace encoder_detail {

inline Var self_attention(Graph& g, const BoundModel::Layer& L, Var queries_src, Var keys_src,
                          std::size_t n_heads) {
  Var q = add_bias(matmul(queries_src, L.wq), L.bq);
  Var k = add_bias(matmul(keys_src, L.wk), L.bk);
  Var v = add_bias(matmul(keys_src, L.wv), L.bv);
  const std::size_t d = q.value().cols();
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    heads.push_back(matmul(weights, vh));
  }
  Var merged = n_heads == 1 ? heads.front() : concat_cols(heads);
  (void)g;
  return add_bias(matmul(merged, L.wo), L.bo);
}

}  // namespace encoder_detail

/// Pooled position-0 representation of a CLS-prefixed token sequence: token
/// embeddings plus sinusoidal positions, `n_layers` pre-norm blocks
/// (multi-head self-attention, then GELU feed-forward), and a final layer
/// norm. The last block only computes the position-0 row, which is all the
/// readout needs.
inline Var encode(const BoundModel& m, const TokenIds& tokens) {
  Graph& g = *m.graph;
  const EncoderConfig& cfg = m.params->config();
  const auto& ids = tokens.ids;
  if (ids.empty()) throw UsageError("encode needs at least the CLS token");
  if (ids.size() > cfg.max_seq_len)
    throw DataError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] >= cfg.vocab_size)
      throw DataError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                      " is outside the vocabulary of " + std::to_string(cfg.vocab_size));
  const std::size_t len = ids.size(), d = cfg.d_model;
  Var x = add(gather_rows(m.embed, ids), g.constant(positional_encoding(len, d)));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& L = m.layers[l];
    const bool last = l + 1 == m.layers.size();
    Var u = layer_norm(x, L.ln1_gain, L.ln1_bias);
    Var attn = encoder_detail::self_attention(g, L, last ? row(u, 0) : u, u, cfg.n_heads);
    Var h = add(last ? row(x, 0) : x, attn);
    Var u2 = layer_norm(h, L.ln2_gain, L.ln2_bias);
    Var ff = add_bias(matmul(gelu(add_bias(matmul(u2, L.w1), L.b1)), L.w2), L.b2);
    x = add(h, ff);
  }
  if (m.layers.empty()) x = row(x, 0);
  return reshape(layer_norm(x, m.final_gain, m.final_bias), {d});
}

/// Representation of the additional information (prompt, topic, type); it
/// shares the essay encoder's weights.
inline Var encode_additional(const BoundModel& m, const TokenIds& prompt_tokens) {
  return encode(m, prompt_tokens);
}

/// Essay representation followed by additional-information representation.
inline Var combine_repr(Var cls, Var additional) {
  if (cls.value().rank() != 1 || additional.value().rank() != 1 || cls.size() != additional.size())
    throw DimensionError("combine_repr width mismatch: " + shape_str(cls.shape()) + " vs " +
                         shape_str(additional.shape()));
  return concat(cls, additional);
}

inline Tensor combine_repr(const Tensor& cls, const Tensor& additional) {
  Graph g;
  return combine_repr(g.constant(cls), g.constant(additional)).value();
}

struct EncoderOutput {
  Tensor cls;
  std::optional<Tensor> additional;
  bool empty_input = false;
};

/// Inference-only encoding of an essay and optional prompt.
inline EncoderOutput encode_text(const ModelParams& p, const Vocab& vocab, const std::string& essay,
                                 const std::optional<std::string>& prompt) {
  Graph g;
  BoundModel m = bind(g, p, false);
  const std::size_t max_len = p.config().max_seq_len;
  EncoderOutput out;
  TokenIds t = tokenize(essay, vocab, max_len);
  out.empty_input = t.empty_input;
  out.cls = encode(m, t).value();
  if (prompt) out.additional = encode_additional(m, tokenize(*prompt, vocab, max_len)).value();
  return out;
}

}  // namespace aems
