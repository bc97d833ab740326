// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aems/corpus.hpp"
#include "aems/error.hpp"

namespace aems {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kClsId = 1;
inline constexpr std::size_t kUnkId = 2;
inline constexpr std::size_t kReservedTokens = 3;

class Vocab {
 public:
  Vocab() : tokens_{"<pad>", "<cls>", "<unk>"} { reindex(); }

  /// Rebuilds from the full id-ordered token list (reserved tokens included).
  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kReservedTokens || tokens_[kPadId] != "<pad>" || tokens_[kClsId] != "<cls>" ||
        tokens_[kUnkId] != "<unk>")
      throw DataError("vocabulary must start with <pad>, <cls>, <unk>");
    reindex();
    if (index_.size() != tokens_.size()) throw DataError("vocabulary contains duplicate tokens");
  }

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

  [[nodiscard]] std::size_t id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
  }

  [[nodiscard]] bool contains(std::string_view token) const {
    return index_.count(std::string(token)) != 0;
  }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Lowercases ASCII and splits on whitespace; every ASCII punctuation
/// character becomes its own token. Bytes >= 0x80 are word characters.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

struct TokenIds {
  std::vector<std::size_t> ids;
  /// Input had no tokens; the sequence is the lone CLS marker.
  bool empty_input = false;
};

/// CLS-prefixed id sequence truncated to `max_seq_len` entries.
inline TokenIds tokenize(std::string_view text, const Vocab& vocab, std::size_t max_seq_len) {
  if (max_seq_len < 1) throw UsageError("max_seq_len must be positive");
  TokenIds t;
  t.ids.push_back(kClsId);
  const auto words = split_words(text);
  t.empty_input = words.empty();
  for (const auto& w : words) {
    if (t.ids.size() >= max_seq_len) break;
    t.ids.push_back(vocab.id(w));
  }
  return t;
}

/// Frequency-ranked vocabulary over essay texts and prompts of `train`;
/// ties break lexicographically. `max_size` counts the reserved ids.
inline Vocab build_vocab(const Corpus& train, std::size_t max_size) {
  if (train.records.empty()) throw UsageError("cannot build a vocabulary from an empty split");
  std::map<std::string, std::size_t> counts;
  for (const EssayRecord& rec : train.records) {
    for (auto& w : split_words(rec.full_text)) ++counts[w];
    if (rec.prompt)
      for (auto& w : split_words(*rec.prompt)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{"<pad>", "<cls>", "<unk>"};
  for (auto& [w, c] : ranked) {
    if (tokens.size() >= std::max(max_size, kReservedTokens)) break;
    if (w == "<pad>" || w == "<cls>" || w == "<unk>") continue;
    tokens.push_back(w);
  }
  return Vocab(std::move(tokens));
}

}  // namespace aems
