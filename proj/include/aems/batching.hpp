// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aems/corpus.hpp"
#include "aems/error.hpp"

namespace aems {

struct Batch {
  /// Indices into the corpus records.
  std::vector<std::size_t> records;
  /// Same-prompt positive pairs, as positions within `records`.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct BatchSequence {
  std::vector<Batch> batches;
  /// Pairing was requested but no two records share a prompt_id.
  bool no_shared_prompts = false;
};

/// Shuffles the corpus under `seed` and cuts it into batches of at most
/// `batch_size` records. With `pair_by_prompt`, same-prompt records are
/// paired first and a pair never straddles two batches.
inline BatchSequence make_batches(const Corpus& corpus, std::size_t batch_size, std::uint64_t seed,
                                  bool pair_by_prompt) {
  if (batch_size < 1) throw UsageError("batch size must be positive");
  if (pair_by_prompt && batch_size < 2) throw UsageError("prompt pairing needs batch size >= 2");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  BatchSequence seq;
  if (!pair_by_prompt) {
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
      Batch b;
      b.records.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
      seq.batches.push_back(std::move(b));
    }
    return seq;
  }

  // Units are pairs (two records) or singles; pairs are formed greedily in
  // shuffled order within each prompt group.
  std::vector<std::vector<std::size_t>> units;
  std::map<std::string, std::size_t> waiting;  // prompt_id -> record awaiting a partner
  std::vector<std::size_t> singles;
  for (std::size_t idx : order) {
    const auto& pid = corpus.records[idx].prompt_id;
    if (!pid) {
      singles.push_back(idx);
      continue;
    }
    auto it = waiting.find(*pid);
    if (it == waiting.end()) {
      waiting.emplace(*pid, idx);
    } else {
      units.push_back({it->second, idx});
      waiting.erase(it);
    }
  }
  seq.no_shared_prompts = units.empty();
  for (const auto& [pid, idx] : waiting) singles.push_back(idx);
  std::sort(singles.begin(), singles.end(), [&order](std::size_t a, std::size_t b) {
    return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
  });
  for (std::size_t s : singles) units.push_back({s});
  std::shuffle(units.begin(), units.end(), rng);

  Batch cur;
  auto flush = [&] {
    if (!cur.records.empty()) seq.batches.push_back(std::move(cur));
    cur = Batch{};
  };
  for (const auto& u : units) {
    if (cur.records.size() + u.size() > batch_size) flush();
    if (u.size() == 2) cur.pairs.emplace_back(cur.records.size(), cur.records.size() + 1);
    cur.records.insert(cur.records.end(), u.begin(), u.end());
  }
  flush();
  return seq;
}

}  // namespace aems
