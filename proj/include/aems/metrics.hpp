// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aems/corpus.hpp"
#include "aems/csv.hpp"
#include "aems/error.hpp"
#include "aems/heads.hpp"
#include "aems/rubric.hpp"

namespace aems {

/// K x K counts; rows are gold band indices, columns predicted.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) {}

  std::uint64_t& at(std::size_t gold, std::size_t pred) { return counts[gold * k + pred]; }
  [[nodiscard]] std::uint64_t at(std::size_t gold, std::size_t pred) const { return counts[gold * k + pred]; }

  [[nodiscard]] std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  [[nodiscard]] ConfusionMatrix transposed() const {
    ConfusionMatrix t(k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) t.at(j, i) = at(i, j);
    return t;
  }
};

inline ConfusionMatrix confusion(std::span<const std::size_t> gold, std::span<const std::size_t> pred,
                                 std::size_t k) {
  if (gold.size() != pred.size())
    throw DataError("confusion: " + std::to_string(gold.size()) + " gold vs " + std::to_string(pred.size()) +
                    " predicted labels");
  ConfusionMatrix m(k);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= k || pred[i] >= k)
      throw DataError("confusion: label at position " + std::to_string(i) + " is outside " + std::to_string(k) +
                      " classes");
    ++m.at(gold[i], pred[i]);
  }
  return m;
}

struct QwkResult {
  double value = 0.0;
  /// Both raters used one and the same band; agreement is taken as perfect.
  bool degenerate = false;
};

/// Quadratic weighted kappa: 1 - sum(w O) / sum(w E) with
/// w_ij = (i-j)^2 / (K-1)^2, O the observed proportions and E the outer
/// product of the gold and predicted marginals.
inline QwkResult qwk_detail(const ConfusionMatrix& m) {
  if (m.k < 2) throw UsageError("QWK needs at least two classes");
  const std::uint64_t total = m.total();
  if (total == 0) throw UsageError("QWK of an empty confusion matrix");
  const std::size_t k = m.k;
  const double n = static_cast<double>(total);
  std::vector<double> row(k, 0.0), col(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      row[i] += static_cast<double>(m.at(i, j)) / n;
      col[j] += static_cast<double>(m.at(i, j)) / n;
    }
  const double denom_k = static_cast<double>((k - 1) * (k - 1));
  double observed = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double diff = static_cast<double>(i) - static_cast<double>(j);
      const double w = diff * diff / denom_k;
      observed += w * static_cast<double>(m.at(i, j)) / n;
      expected += w * row[i] * col[j];
    }
  if (expected == 0.0) return {1.0, true};
  if (observed == 0.0) return {1.0, false};
  return {1.0 - observed / expected, false};
}

inline double qwk(const ConfusionMatrix& m) { return qwk_detail(m).value; }

namespace metrics_detail {

struct ClassStats {
  std::vector<std::uint64_t> tp, gold, pred;
};

inline ClassStats class_stats(const ConfusionMatrix& m) {
  if (m.total() == 0) throw UsageError("metrics of an empty confusion matrix");
  ClassStats s{std::vector<std::uint64_t>(m.k), std::vector<std::uint64_t>(m.k), std::vector<std::uint64_t>(m.k)};
  for (std::size_t i = 0; i < m.k; ++i)
    for (std::size_t j = 0; j < m.k; ++j) {
      s.gold[i] += m.at(i, j);
      s.pred[j] += m.at(i, j);
      if (i == j) s.tp[i] += m.at(i, j);
    }
  return s;
}

}  // namespace metrics_detail

/// Macro precision over the classes that received at least one prediction.
inline double precision_macro(const ConfusionMatrix& m) {
  const auto s = metrics_detail::class_stats(m);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < m.k; ++c)
    if (s.pred[c] > 0) {
      sum += static_cast<double>(s.tp[c]) / static_cast<double>(s.pred[c]);
      ++n;
    }
  return sum / static_cast<double>(n);
}

/// Per-class F1 = 2TP / (2TP + FP + FN), macro-averaged over classes that
/// occur in either gold or predictions. A class with no predictions has F1 0.
inline double f1_macro(const ConfusionMatrix& m) {
  const auto s = metrics_detail::class_stats(m);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < m.k; ++c) {
    const double denom = static_cast<double>(s.gold[c] + s.pred[c]);
    if (denom == 0.0) continue;
    sum += 2.0 * static_cast<double>(s.tp[c]) / denom;
    ++n;
  }
  return sum / static_cast<double>(n);
}

struct DimensionMetrics {
  std::string dimension;
  double precision = 0.0;
  double f1 = 0.0;
  double qwk = 0.0;
};

struct MetricsReport {
  std::string corpus_id;
  std::string model_id;
  std::size_t essay_count = 0;
  std::string averaging = "macro";
  std::vector<DimensionMetrics> rows;

  [[nodiscard]] DimensionMetrics mean() const {
    DimensionMetrics m{"mean", 0.0, 0.0, 0.0};
    for (const auto& r : rows) {
      m.precision += r.precision;
      m.f1 += r.f1;
      m.qwk += r.qwk;
    }
    const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    m.precision /= n;
    m.f1 /= n;
    m.qwk /= n;
    return m;
  }

  [[nodiscard]] const DimensionMetrics& row(const std::string& dim) const {
    for (const auto& r : rows)
      if (r.dimension == dim) return r;
    throw UsageError("report has no dimension '" + dim + "'");
  }
};

/// Scores every rubric dimension from snapped band predictions. Predictions
/// are matched to gold records by essay id.
inline MetricsReport evaluate_corpus(const std::vector<DimensionScores>& predictions, const Corpus& gold,
                                     const std::string& corpus_id = "", const std::string& model_id = "") {
  const RubricSpec& rubric = gold.rubric;
  std::map<std::string, const DimensionScores*> by_id;
  std::vector<std::string> extra, missing;
  for (const auto& p : predictions)
    if (!by_id.emplace(p.essay_id, &p).second) extra.push_back(p.essay_id + " (duplicate)");
  std::set<std::string> gold_ids;
  for (const auto& rec : gold.records) {
    gold_ids.insert(rec.id);
    if (!by_id.count(rec.id)) missing.push_back(rec.id);
  }
  for (const auto& p : predictions)
    if (!gold_ids.count(p.essay_id)) extra.push_back(p.essay_id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "prediction ids do not match corpus ids;";
    auto list = [&msg](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + label + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ...";
    };
    list("missing", missing);
    list("extra", extra);
    throw DataError(msg);
  }

  MetricsReport report;
  report.corpus_id = corpus_id;
  report.model_id = model_id;
  report.essay_count = gold.size();
  for (std::size_t d = 0; d < rubric.num_dimensions(); ++d) {
    std::vector<std::size_t> g, p;
    for (const auto& rec : gold.records) {
      const DimensionScores& s = *by_id.at(rec.id);
      if (s.dimensions.size() != rubric.num_dimensions() || s.dimensions[d].dimension != rubric.dimensions[d])
        throw DataError("prediction for '" + rec.id + "' does not follow the rubric dimensions");
      g.push_back(*rubric.band_index(rec.scores[d]));
      p.push_back(s.dimensions[d].band_index);
    }
    const ConfusionMatrix m = confusion(g, p, rubric.num_bands());
    report.rows.push_back({rubric.dimensions[d], precision_macro(m), f1_macro(m), qwk(m)});
  }
  return report;
}

enum class ReportFormat { text, csv };

inline std::string render_report(const MetricsReport& r, ReportFormat format) {
  std::string out;
  char buf[256];
  if (format == ReportFormat::csv) {
    out = csv::format_row({"dimension", "precision", "f1", "qwk"});
    for (const auto& row : r.rows)
      out += csv::format_row(
          {row.dimension, format_double(row.precision), format_double(row.f1), format_double(row.qwk)});
    return out;
  }
  std::size_t width = 9;
  for (const auto& row : r.rows) width = std::max(width, row.dimension.size());
  const int w = static_cast<int>(width);
  std::snprintf(buf, sizeof buf, "# corpus: %s  model: %s  essays: %zu  averaging: %s\n",
                r.corpus_id.empty() ? "-" : r.corpus_id.c_str(), r.model_id.empty() ? "-" : r.model_id.c_str(),
                r.essay_count, r.averaging.c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %8s  %6s\n", w, "Dimension", "Precision", "F1 Score", "QWK");
  out += buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.2f  %8.2f  %6.2f\n", w, row.dimension.c_str(), row.precision, row.f1,
                  row.qwk);
    out += buf;
  }
  const auto m = r.mean();
  std::snprintf(buf, sizeof buf, "# mean  precision %.2f  f1 %.2f  qwk %.2f\n", m.precision, m.f1, m.qwk);
  out += buf;
  return out;
}

/// Parses the CSV form of a report back into rows.
inline MetricsReport parse_report_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows.front() != csv::Row{"dimension", "precision", "f1", "qwk"})
    throw SchemaError("report CSV must start with header dimension,precision,f1,qwk");
  MetricsReport r;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 4) throw SchemaError("report CSV row " + std::to_string(i) + " needs 4 fields");
    try {
      r.rows.push_back({row[0], parse_double(row[1], "precision"), parse_double(row[2], "f1"),
                        parse_double(row[3], "qwk")});
    } catch (const ConfigError& e) {
      throw DataError("report CSV row " + std::to_string(i) + ": " + e.what());
    }
  }
  return r;
}

}  // namespace aems
