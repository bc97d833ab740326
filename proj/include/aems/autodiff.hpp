// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <deque>
#include <vector>

#include "aems/error.hpp"
#include "aems/tensor.hpp"

// Tape-based reverse-mode differentiation. A Graph owns every node created
// while evaluating an expression; nodes are appended in evaluation order so
// the tape is already topologically sorted and backward() walks it in reverse.

namespace aems {

class Graph;

/// Handle to a node on a Graph tape.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] std::size_t size() const { return value().size(); }
};

using BackwardFn = std::function<void(Graph&, std::size_t self)>;

struct GradNode {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::size_t> parents;
  BackwardFn backward;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  /// Differentiable input (a parameter or the point of a gradient check).
  Var leaf(Tensor value) {
    GradNode n;
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var constant(Tensor value) {
    GradNode n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var make(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    GradNode n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [this](std::size_t p) { return nodes_[p].requires_grad; });
    if (n.requires_grad) {
      n.parents = std::move(parents);
      n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulated at a node; zeros when backward never reached it.
  [[nodiscard]] Tensor grad(Var v) const {
    const GradNode& n = nodes_[v.id];
    return n.has_grad ? n.grad : Tensor(n.value.shape());
  }

  /// Output gradient of a node, valid inside its backward rule.
  [[nodiscard]] const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

  /// Mutable gradient buffer of a parent; nullptr when the parent is a constant.
  Tensor* sink(std::size_t id) {
    GradNode& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return &n.grad;
  }

  void backward(Var root) {
    if (root.graph != this) throw UsageError("backward root belongs to another graph");
    const GradNode& r = nodes_[root.id];
    if (!r.value.is_scalar())
      throw UsageError("backward requires a scalar root, got shape " + shape_str(r.value.shape()));
    zero_grad();
    nodes_[root.id].grad = Tensor(r.value.shape(), 1.0);
    nodes_[root.id].has_grad = true;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      GradNode& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, i);
    }
  }

  void zero_grad() {
    for (GradNode& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor();
    }
  }

 private:
  std::deque<GradNode> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw UsageError("operands belong to different graphs");
  return *a.graph;
}

// C += A * B with A[m x k], B[k x n], fixed i-k-j accumulation order.
inline void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank2(av, "matmul");
  detail::require_rank2(bv, "matmul");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k)
    throw DimensionError("matmul inner extents differ: " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  Tensor out({m, n});
  detail::gemm_acc(av.values(), bv.values(), out.values(), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return g.make(std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph& gr, std::size_t self) {
    const auto dc = gr.upstream(self).values();
    const auto A = gr.value(ia).values();
    const auto B = gr.value(ib).values();
    if (Tensor* da = gr.sink(ia)) {
      // dA[i,p] += sum_j dC[i,j] * B[p,j]
      auto d = da->values();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dc[i * n + j] * B[p * n + j];
          d[i * k + p] += s;
        }
    }
    if (Tensor* db = gr.sink(ib)) {
      // dB[p,:] += A[i,p] * dC[i,:]
      auto d = db->values();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) d[p * n + j] += aip * dc[i * n + j];
        }
    }
  });
}

inline Var transpose(Var a) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  detail::require_rank2(av, "transpose");
  const std::size_t m = av.shape()[0], n = av.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  const std::size_t ia = a.id;
  return g.make(std::move(out), {ia}, [ia, m, n](Graph& gr, std::size_t self) {
    const Tensor& d = gr.upstream(self);
    Tensor* da = gr.sink(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da->at(i, j) += d.at(j, i);
  });
}

inline Var reshape(Var a, Shape shape) {
  Graph& g = *a.graph;
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return g.make(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    auto s = gr.sink(ia)->values();
    for (std::size_t i = 0; i < d.size(); ++i) s[i] += d[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace detail {

// Unary elementwise op given f(x) and f'(x) expressed via (x, y).
template <class F, class DF>
Var unary(Var a, F f, DF df) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::size_t ia = a.id;
  return g.make(std::move(out), {ia}, [ia, df](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    auto x = gr.value(ia).values();
    auto y = gr.value(self).values();
    auto s = gr.sink(ia)->values();
    for (std::size_t i = 0; i < d.size(); ++i) s[i] += d[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.make(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    for (std::size_t p : {ia, ib})
      if (Tensor* s = gr.sink(p)) {
        auto sv = s->values();
        for (std::size_t i = 0; i < d.size(); ++i) sv[i] += d[i];
      }
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.make(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    if (Tensor* s = gr.sink(ia))
      for (std::size_t i = 0; i < d.size(); ++i) (*s)[i] += d[i];
    if (Tensor* s = gr.sink(ib))
      for (std::size_t i = 0; i < d.size(); ++i) (*s)[i] -= d[i];
  });
}

/// Hadamard product.
inline Var mul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.make(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    auto av = gr.value(ia).values();
    auto bv = gr.value(ib).values();
    if (Tensor* s = gr.sink(ia))
      for (std::size_t i = 0; i < d.size(); ++i) (*s)[i] += d[i] * bv[i];
    if (Tensor* s = gr.sink(ib))
      for (std::size_t i = 0; i < d.size(); ++i) (*s)[i] += d[i] * av[i];
  });
}

inline Var scale(Var a, double factor) {
  return detail::unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

inline Var square(Var a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  for (double v : a.value().values())
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var relu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// Exact (erf-based) GELU.
inline Var gelu(Var a) {
  return detail::unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

/// Adds a bias vector of width n to every row of an [m x n] matrix (or to a vector of width n).
inline Var add_bias(Var x, Var bias) {
  Graph& g = detail::graph_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t n = xv.cols();
  if (bv.rank() != 1 || bv.size() != n)
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not fit " +
                         shape_str(xv.shape()));
  const std::size_t m = xv.size() / n;
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  const std::size_t ix = x.id, ib = bias.id;
  return g.make(std::move(out), {ix, ib}, [ix, ib, m, n](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    if (Tensor* s = gr.sink(ix))
      for (std::size_t i = 0; i < d.size(); ++i) (*s)[i] += d[i];
    if (Tensor* s = gr.sink(ib))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*s)[j] += d[i * n + j];
  });
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

/// Concatenates rank-1 tensors end to end.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  Graph& g = *parts.front().graph;
  std::vector<double> data;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.graph != &g) throw UsageError("operands belong to different graphs");
    if (p.value().rank() != 1)
      throw DimensionError("concat expects vectors, got " + shape_str(p.shape()));
    offsets.push_back(data.size());
    auto v = p.value().values();
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(p.id);
  }
  Tensor out = Tensor::vector(std::move(data));
  return g.make(std::move(out), ids, [ids, offsets](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (Tensor* s = gr.sink(ids[k]))
        for (std::size_t i = 0; i < s->size(); ++i) (*s)[i] += d[offsets[k] + i];
  });
}

inline Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(std::span<const Var>(parts));
}

/// Stacks scalars into a vector.
inline Var stack(std::span<const Var> scalars) {
  for (const Var& s : scalars)
    if (!s.value().is_scalar()) throw DimensionError("stack expects scalars");
  return concat(scalars);
}

/// Concatenates matrices with equal row counts along columns.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols of zero tensors");
  Graph& g = *parts.front().graph;
  const std::size_t m = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    detail::require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != m) throw DimensionError("concat_cols row counts differ");
    widths.push_back(p.value().cols());
    ids.push_back(p.id);
    total += widths.back();
  }
  Tensor out({m, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out.at(i, off + j) = v.at(i, j);
    off += widths[k];
  }
  return g.make(std::move(out), ids, [ids, widths, m, total](Graph& gr, std::size_t self) {
    const Tensor& d = gr.upstream(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (Tensor* s = gr.sink(ids[k]))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) s->at(i, j) += d.at(i, o + j);
      o += widths[k];
    }
    (void)total;
  });
}

inline Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  detail::require_rank2(av, "slice_cols");
  const std::size_t m = av.rows(), n = av.cols();
  if (count == 0 || start + count > n)
    throw DimensionError("slice_cols range exceeds " + shape_str(av.shape()));
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = av.at(i, start + j);
  const std::size_t ia = a.id;
  return g.make(std::move(out), {ia}, [ia, m, start, count](Graph& gr, std::size_t self) {
    const Tensor& d = gr.upstream(self);
    Tensor* s = gr.sink(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) s->at(i, start + j) += d.at(i, j);
  });
}

/// Row r of a matrix as a [1 x n] matrix.
inline Var row(Var a, std::size_t r) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  detail::require_rank2(av, "row");
  const std::size_t n = av.cols();
  if (r >= av.rows()) throw DimensionError("row index out of range");
  std::vector<double> data(av.values().begin() + r * n, av.values().begin() + (r + 1) * n);
  const std::size_t ia = a.id;
  return g.make(Tensor({1, n}, std::move(data)), {ia}, [ia, r, n](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    Tensor* s = gr.sink(ia);
    for (std::size_t j = 0; j < n; ++j) (*s)[r * n + j] += d[j];
  });
}

/// Picks elements of a flattened tensor by position into a vector.
inline Var select(Var a, std::vector<std::size_t> indices) {
  Graph& g = *a.graph;
  const Tensor& av = a.value();
  if (indices.empty()) throw UsageError("select of zero indices");
  std::vector<double> data;
  data.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= av.size()) throw DimensionError("select index out of range");
    data.push_back(av[i]);
  }
  const std::size_t ia = a.id;
  return g.make(Tensor::vector(std::move(data)), {ia},
                [ia, idx = std::move(indices)](Graph& gr, std::size_t self) {
                  auto d = gr.upstream(self).values();
                  Tensor* s = gr.sink(ia);
                  for (std::size_t k = 0; k < idx.size(); ++k) (*s)[idx[k]] += d[k];
                });
}

inline Var pick(Var a, std::size_t index) { return select(a, {index}); }

/// Looks up rows of an embedding table; gradient scatters back into the table.
inline Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Graph& g = *table.graph;
  const Tensor& tv = table.value();
  detail::require_rank2(tv, "gather_rows");
  const std::size_t n = tv.cols();
  if (ids.empty()) throw UsageError("gather_rows of zero ids");
  Tensor out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows())
      throw DataError("token id " + std::to_string(ids[r]) + " at position " + std::to_string(r) +
                      " exceeds table of " + std::to_string(tv.rows()) + " rows");
    for (std::size_t j = 0; j < n; ++j) out.at(r, j) = tv.at(ids[r], j);
  }
  const std::size_t it = table.id;
  return g.make(std::move(out), {it},
                [it, n, rows = std::vector<std::size_t>(ids.begin(), ids.end())](
                    Graph& gr, std::size_t self) {
                  const Tensor& d = gr.upstream(self);
                  Tensor* s = gr.sink(it);
                  for (std::size_t r = 0; r < rows.size(); ++r)
                    for (std::size_t j = 0; j < n; ++j) s->at(rows[r], j) += d.at(r, j);
                });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var sum(Var a) {
  Graph& g = *a.graph;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  return g.make(Tensor::scalar(s), {ia}, [ia](Graph& gr, std::size_t self) {
    const double d = gr.upstream(self)[0];
    for (double& x : gr.sink(ia)->values()) x += d;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

/// Numerically stable log(sum(exp(v))) over all elements.
inline Var logsumexp(Var a) {
  Graph& g = *a.graph;
  auto v = a.value().values();
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  const double lse = mx + std::log(s);
  const std::size_t ia = a.id;
  return g.make(Tensor::scalar(lse), {ia}, [ia](Graph& gr, std::size_t self) {
    const double d = gr.upstream(self)[0];
    const double lse_v = gr.value(self)[0];
    auto x = gr.value(ia).values();
    auto s = gr.sink(ia)->values();
    for (std::size_t i = 0; i < x.size(); ++i) s[i] += d * std::exp(x[i] - lse_v);
  });
}

// ---------------------------------------------------------------------------
// Normalization family
// ---------------------------------------------------------------------------

namespace detail {

inline void softmax_inplace(std::span<double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : x) v /= s;
}

}  // namespace detail

/// Max-subtracted softmax of a vector.
inline Var softmax(Var a) {
  if (a.size() == 0) throw DomainError("softmax of empty input");
  Graph& g = *a.graph;
  Tensor out = a.value();
  detail::softmax_inplace(out.values());
  const std::size_t ia = a.id;
  return g.make(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    auto y = gr.value(self).values();
    double dot_dy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot_dy += d[i] * y[i];
    auto s = gr.sink(ia)->values();
    for (std::size_t i = 0; i < y.size(); ++i) s[i] += y[i] * (d[i] - dot_dy);
  });
}

/// Row-wise softmax of a matrix (attention weights).
inline Var softmax_rows(Var a) {
  Graph& g = *a.graph;
  Tensor out = a.value();
  detail::require_rank2(out, "softmax_rows");
  const std::size_t m = out.rows(), n = out.cols();
  for (std::size_t i = 0; i < m; ++i) detail::softmax_inplace(out.values().subspan(i * n, n));
  const std::size_t ia = a.id;
  return g.make(std::move(out), {ia}, [ia, m, n](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    auto y = gr.value(self).values();
    auto s = gr.sink(ia)->values();
    for (std::size_t i = 0; i < m; ++i) {
      double dot_dy = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot_dy += d[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) s[i * n + j] += y[i * n + j] * (d[i * n + j] - dot_dy);
    }
  });
}

inline Var log_softmax(Var a) {
  if (a.size() == 0) throw DomainError("log_softmax of empty input");
  Graph& g = *a.graph;
  Tensor out = a.value();
  auto v = out.values();
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  const double lse = mx + std::log(s);
  for (double& x : v) x -= lse;
  const std::size_t ia = a.id;
  return g.make(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    auto d = gr.upstream(self).values();
    auto y = gr.value(self).values();
    double dsum = 0.0;
    for (double x : d) dsum += x;
    auto s = gr.sink(ia)->values();
    for (std::size_t i = 0; i < y.size(); ++i) s[i] += d[i] - std::exp(y[i]) * dsum;
  });
}

/// Row-wise layer normalization with learned gain and bias of width n.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  Graph& g = detail::graph_of(x, gain);
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  const std::size_t m = xv.size() / n;
  if (gain.size() != n || bias.size() != n)
    throw DimensionError("layer_norm parameters do not match width " + std::to_string(n));
  Tensor out(xv.shape());
  // Normalized activations and inverse std are kept for the backward rule.
  std::vector<double> xhat(xv.size()), inv_std(m);
  const auto gv = gain.value().values();
  const auto bv = bias.value().values();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = xv[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return g.make(std::move(out), {ix, ig, ib},
                [ix, ig, ib, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Graph& gr, std::size_t self) {
                  auto d = gr.upstream(self).values();
                  auto gv = gr.value(ig).values();
                  if (Tensor* sg = gr.sink(ig))
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) (*sg)[j] += d[i * n + j] * xhat[i * n + j];
                  if (Tensor* sb = gr.sink(ib))
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) (*sb)[j] += d[i * n + j];
                  if (Tensor* sx = gr.sink(ix)) {
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t i = 0; i < m; ++i) {
                      double mean_dh = 0.0, mean_dh_xhat = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dh = d[i * n + j] * gv[j];
                        mean_dh += dh;
                        mean_dh_xhat += dh * xhat[i * n + j];
                      }
                      mean_dh *= inv_n;
                      mean_dh_xhat *= inv_n;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dh = d[i * n + j] * gv[j];
                        (*sx)[i * n + j] +=
                            inv_std[i] * (dh - mean_dh - xhat[i * n + j] * mean_dh_xhat);
                      }
                    }
                  }
                });
}

/// u.v / (|u| |v|) over flattened tensors of equal size.
inline Var cosine_similarity(Var u, Var v) {
  Graph& g = detail::graph_of(u, v);
  const auto uv = u.value().values();
  const auto vv = v.value().values();
  if (uv.size() != vv.size())
    throw DimensionError("cosine_similarity width mismatch: " + shape_str(u.shape()) + " vs " +
                         shape_str(v.shape()));
  double uu = 0.0, vvs = 0.0, u_dot_v = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    uu += uv[i] * uv[i];
    vvs += vv[i] * vv[i];
    u_dot_v += uv[i] * vv[i];
  }
  if (uu == 0.0 || vvs == 0.0) throw DomainError("cosine_similarity of a zero-norm vector");
  const double nu = std::sqrt(uu), nv = std::sqrt(vvs);
  const double c = std::clamp(u_dot_v / (nu * nv), -1.0, 1.0);
  const std::size_t iu = u.id, iv = v.id;
  return g.make(Tensor::scalar(c), {iu, iv}, [iu, iv, nu, nv](Graph& gr, std::size_t self) {
    const double d = gr.upstream(self)[0];
    const double c = gr.value(self)[0];
    auto a = gr.value(iu).values();
    auto b = gr.value(iv).values();
    if (Tensor* s = gr.sink(iu))
      for (std::size_t i = 0; i < a.size(); ++i)
        (*s)[i] += d * (b[i] / (nu * nv) - c * a[i] / (nu * nu));
    if (Tensor* s = gr.sink(iv))
      for (std::size_t i = 0; i < b.size(); ++i)
        (*s)[i] += d * (a[i] / (nu * nv) - c * b[i] / (nv * nv));
  });
}

// ---------------------------------------------------------------------------
// Tensor-level conveniences (no tape retained)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Graph g;
  return matmul(g.constant(a), g.constant(b)).value();
}

inline Tensor softmax(const Tensor& logits) {
  Graph g;
  return softmax(g.constant(logits)).value();
}

inline double cosine_similarity(const Tensor& u, const Tensor& v) {
  Graph g;
  return cosine_similarity(g.constant(u), g.constant(v)).value().item();
}

}  // namespace aems
