// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "aems/corpus.hpp"
#include "aems/synth.hpp"

using namespace aems;

namespace {

// Independent recount of the documented statistics from the raw text.
std::size_t count_of(const std::string& text, const std::vector<std::string>& pool, bool distinct) {
  std::set<std::string> seen;
  std::size_t n = 0;
  for (const auto& w : split_words(text))
    for (const auto& p : pool)
      if (w == p) {
        ++n;
        seen.insert(w);
      }
  return distinct ? seen.size() : n;
}

}  // namespace

TEST(Synth, DeterministicUnderSeed) {
  EXPECT_EQ(synth_corpus(200, ellipse_rubric(), 17), synth_corpus(200, ellipse_rubric(), 17));
  EXPECT_NE(synth_corpus(200, ellipse_rubric(), 17), synth_corpus(200, ellipse_rubric(), 18));
}

TEST(Synth, AllScoresAreLegalBands) {
  for (const RubricSpec& r : {ellipse_rubric(), ielts_rubric()}) {
    Corpus c = synth_corpus(300, r, 2);
    EXPECT_NO_THROW(validate_corpus(c));
    for (const auto& rec : c.records) {
      EXPECT_TRUE(rec.prompt.has_value());
      EXPECT_TRUE(rec.prompt_id.has_value());
    }
  }
}

TEST(Synth, TooFewEssaysIsUsageError) { EXPECT_THROW(synth_corpus(9, ellipse_rubric(), 1), UsageError); }

TEST(Synth, GoldIsRecoverableFromSurfaceStatistics) {
  const RubricSpec r = ellipse_rubric();
  Corpus c = synth_corpus(500, r, 4);
  for (const auto& rec : c.records) {
    const auto bands = synth_recover_bands(rec.full_text, synth_prompt_index(rec), r);
    for (std::size_t d = 0; d < r.num_dimensions(); ++d) EXPECT_EQ(r.bands[bands[d]], rec.scores[d]) << rec.id;
  }
}

TEST(Synth, EllipseStatisticsMatchIndependentRecount) {
  const RubricSpec r = ellipse_rubric();
  const auto plans = synth_detail::plan(r, {});
  Corpus c = synth_corpus(300, r, 8);
  const std::size_t k = r.num_bands();
  for (const auto& rec : c.records) {
    EXPECT_EQ(*r.band_index(rec.scores[0]), count_of(rec.full_text, plans[0].pool, false));
    EXPECT_EQ(*r.band_index(rec.scores[1]), count_of(rec.full_text, plans[1].pool, false));
    EXPECT_EQ(*r.band_index(rec.scores[2]), count_of(rec.full_text, plans[2].pool, true));
    EXPECT_EQ(*r.band_index(rec.scores[3]), count_of(rec.full_text, plans[3].pool, false));
    EXPECT_EQ(*r.band_index(rec.scores[4]), k - 1 - count_of(rec.full_text, plans[4].pool, false));
    EXPECT_EQ(*r.band_index(rec.scores[5]), k - 1 - count_of(rec.full_text, plans[5].pool, false));
  }
}

TEST(Synth, VocabularyBandNondecreasingInDistinctAdvancedWords) {
  const RubricSpec r = ellipse_rubric();
  const auto pool = synth_detail::plan(r, {})[2].pool;
  Corpus c = synth_corpus(400, r, 6);
  std::vector<std::pair<std::size_t, double>> points;
  for (const auto& rec : c.records) points.emplace_back(count_of(rec.full_text, pool, true), rec.scores[2]);
  std::sort(points.begin(), points.end());
  for (std::size_t i = 1; i < points.size(); ++i) EXPECT_LE(points[i - 1].second, points[i].second);
}

TEST(Synth, FixedTokenLength) {
  Corpus c = synth_corpus(100, ellipse_rubric(), 1);
  const std::size_t len = split_words(c.records[0].full_text).size();
  for (const auto& rec : c.records) EXPECT_EQ(split_words(rec.full_text).size(), len);
}

TEST(Synth, IeltsOverallIsHalfDownMeanOfCriteria) {
  const RubricSpec r = ielts_rubric();
  Corpus c = synth_corpus(300, r, 3);
  for (const auto& rec : c.records) {
    double total = 0;
    for (std::size_t d = 0; d < 4; ++d) total += static_cast<double>(*r.band_index(rec.scores[d]));
    const double mean = total / 4.0;
    const auto expected = static_cast<std::size_t>(std::ceil(mean - 0.5));
    EXPECT_EQ(*r.band_index(rec.scores[4]), expected) << rec.id;
  }
}

TEST(Synth, PromptDependentScoringUsesTopicKeywords) {
  const RubricSpec r = ellipse_rubric();
  SynthOptions opt;
  opt.prompt_dependent = true;
  Corpus c = synth_corpus(300, r, 5, opt);
  for (const auto& rec : c.records) {
    const auto& topic = synth_detail::topics()[synth_prompt_index(rec)];
    EXPECT_EQ(*r.band_index(rec.scores[0]), count_of(rec.full_text, topic.keywords, false));
  }
  // The same keyword earns nothing under another prompt.
  const auto& a = synth_detail::topics()[0].keywords;
  const auto& b = synth_detail::topics()[1].keywords;
  for (const auto& w : a) EXPECT_EQ(std::find(b.begin(), b.end(), w), b.end());
}

TEST(Synth, CustomRubricGetsGeneratedMarkers) {
  RubricSpec r{"custom", {"content", "language"}, {0, 1, 2, 3}};
  Corpus c = synth_corpus(100, r, 1);
  EXPECT_NO_THROW(validate_corpus(c));
  for (const auto& rec : c.records) {
    const auto bands = synth_recover_bands(rec.full_text, synth_prompt_index(rec), r);
    EXPECT_EQ(r.bands[bands[0]], rec.scores[0]);
    EXPECT_EQ(r.bands[bands[1]], rec.scores[1]);
  }
}

TEST(Synth, TwoThousandWithinBudget) {
  const auto t0 = std::chrono::steady_clock::now();
  Corpus c = synth_corpus(2000, ellipse_rubric(), 42);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(c.size(), 2000u);
  EXPECT_LT(secs, 10.0);
}
