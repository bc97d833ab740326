// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aems/csv.hpp"
#include "aems/error.hpp"
#include "aems/rubric.hpp"

namespace aems {

struct EssayRecord {
  std::string id;
  std::string full_text;
  std::optional<std::string> prompt;
  std::optional<std::string> prompt_id;
  /// One legal band value per rubric dimension, in rubric order.
  std::vector<double> scores;

  bool operator==(const EssayRecord&) const = default;
};

struct Corpus {
  RubricSpec rubric;
  std::vector<EssayRecord> records;

  [[nodiscard]] std::size_t size() const { return records.size(); }
  bool operator==(const Corpus&) const = default;
};

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline const std::vector<std::string>& corpus_base_columns() {
  static const std::vector<std::string> cols{"essay_id", "full_text", "prompt", "prompt_id"};
  return cols;
}

/// Validates ids, band legality and dimension coverage.
inline void validate_corpus(const Corpus& c) {
  c.rubric.validate();
  if (c.records.empty()) throw DataError("corpus has no records");
  std::set<std::string> seen;
  for (std::size_t r = 0; r < c.records.size(); ++r) {
    const EssayRecord& rec = c.records[r];
    if (rec.id.empty()) throw DataError("record " + std::to_string(r + 1) + " has an empty id");
    if (!seen.insert(rec.id).second) throw DataError("duplicate essay id '" + rec.id + "'");
    if (rec.scores.size() != c.rubric.num_dimensions())
      throw DataError("essay '" + rec.id + "' scores " + std::to_string(rec.scores.size()) +
                      " dimensions, rubric has " + std::to_string(c.rubric.num_dimensions()));
    for (std::size_t d = 0; d < rec.scores.size(); ++d)
      if (!c.rubric.band_index(rec.scores[d], 0.0))
        throw DataError("essay '" + rec.id + "' has illegal band " + format_double(rec.scores[d]) +
                        " for " + c.rubric.dimensions[d]);
  }
}

/// Parses corpus CSV text with header
/// `essay_id,full_text,prompt,prompt_id,<dim1>,...`. Extra columns are ignored.
inline Corpus parse_corpus(std::string_view text, const RubricSpec& rubric) {
  rubric.validate();
  const auto rows = csv::parse(text);
  if (rows.empty()) throw SchemaError("corpus CSV has no header row");
  const csv::Row& header = rows.front();
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("corpus CSV is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("essay_id"), c_text = column("full_text"),
                    c_prompt = column("prompt"), c_pid = column("prompt_id");
  std::vector<std::size_t> c_dims;
  for (const auto& d : rubric.dimensions) c_dims.push_back(column(d));

  Corpus corpus{rubric, {}};
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const csv::Row& row = rows[r];
    const std::string where = "row " + std::to_string(r);
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    if (row.size() != header.size())
      throw SchemaError(where + " has " + std::to_string(row.size()) + " fields, header has " +
                        std::to_string(header.size()));
    EssayRecord rec;
    rec.id = row[c_id];
    if (rec.id.empty()) throw DataError(where + ": empty essay_id");
    if (!seen.insert(rec.id).second) throw DataError(where + ": duplicate essay_id '" + rec.id + "'");
    rec.full_text = row[c_text];
    if (!row[c_prompt].empty()) rec.prompt = row[c_prompt];
    if (!row[c_pid].empty()) rec.prompt_id = row[c_pid];
    for (std::size_t d = 0; d < c_dims.size(); ++d) {
      const std::string& cell = row[c_dims[d]];
      const std::string col = "column '" + rubric.dimensions[d] + "'";
      if (trim(cell).empty()) throw DataError(where + ", " + col + ": missing score");
      double v = 0.0;
      try {
        v = parse_double(cell, rubric.dimensions[d]);
      } catch (const ConfigError&) {
        throw DataError(where + ", " + col + ": score '" + cell + "' is not a number");
      }
      auto band = rubric.band_index(v);
      if (!band)
        throw DataError(where + ", " + col + ": score " + cell + " is not a legal band of rubric '" +
                        rubric.name + "'");
      rec.scores.push_back(rubric.bands[*band]);
    }
    corpus.records.push_back(std::move(rec));
  }
  if (corpus.records.empty()) throw DataError("corpus CSV has no data rows");
  return corpus;
}

inline Corpus load_corpus(const std::string& path, const RubricSpec& rubric) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_corpus(ss.str(), rubric);
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline std::string corpus_to_csv(const Corpus& c) {
  csv::Row header = corpus_base_columns();
  header.insert(header.end(), c.rubric.dimensions.begin(), c.rubric.dimensions.end());
  std::string out = csv::format_row(header);
  for (const EssayRecord& rec : c.records) {
    csv::Row row{rec.id, rec.full_text, rec.prompt.value_or(""), rec.prompt_id.value_or("")};
    for (double s : rec.scores) row.push_back(format_double(s));
    out += csv::format_row(row);
  }
  return out;
}

inline void save_corpus(const Corpus& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file '" + path + "'");
  out << corpus_to_csv(c);
  if (!out) throw DataError("failed writing corpus file '" + path + "'");
}

/// Deterministic train/test partition. With `group_by_prompt`, records sharing
/// a prompt_id always land on the same side.
inline std::pair<Corpus, Corpus> split(const Corpus& corpus, double test_fraction, std::uint64_t seed,
                                       bool group_by_prompt = false) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw UsageError("test fraction must lie strictly between 0 and 1");
  const std::size_t n = corpus.size();
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (target == 0 || target >= n)
    throw UsageError("test fraction " + format_double(test_fraction) + " leaves an empty side for " +
                     std::to_string(n) + " records");

  // Units are single records, or whole prompt groups when grouping.
  std::vector<std::vector<std::size_t>> units;
  if (group_by_prompt) {
    std::map<std::string, std::size_t> group_of;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& pid = corpus.records[i].prompt_id;
      if (!pid) {
        units.push_back({i});
        continue;
      }
      auto [it, inserted] = group_of.try_emplace(*pid, units.size());
      if (inserted) units.emplace_back();
      units[it->second].push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) units.push_back({i});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(units.begin(), units.end(), rng);

  std::vector<bool> in_test(n, false);
  std::size_t taken = 0;
  for (const auto& u : units) {
    if (taken >= target) break;
    for (std::size_t i : u) in_test[i] = true;
    taken += u.size();
  }
  Corpus train{corpus.rubric, {}}, test{corpus.rubric, {}};
  for (std::size_t i = 0; i < n; ++i) (in_test[i] ? test : train).records.push_back(corpus.records[i]);
  if (train.records.empty() || test.records.empty())
    throw UsageError("prompt grouping leaves an empty side");
  return {std::move(train), std::move(test)};
}

}  // namespace aems
