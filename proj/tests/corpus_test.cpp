// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "aems/corpus.hpp"
#include "aems/csv.hpp"
#include "aems/synth.hpp"

using namespace aems;

namespace {

const char* kHeader = "essay_id,full_text,prompt,prompt_id,cohesion,syntax,vocabulary,phraseology,grammar,conventions\n";

Corpus numbered(std::size_t n, std::size_t prompts = 0) {
  Corpus c{ellipse_rubric(), {}};
  for (std::size_t i = 0; i < n; ++i) {
    EssayRecord r;
    r.id = "e" + std::to_string(i);
    r.full_text = "text " + std::to_string(i);
    if (prompts) r.prompt_id = "p" + std::to_string(i % prompts);
    r.scores.assign(6, 3.0);
    c.records.push_back(r);
  }
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("aems_corpus_test_" + name);
}

}  // namespace

TEST(Csv, QuotedFieldsAndCrlf) {
  auto rows = csv::parse("a,b\r\n\"x, y\",\"say \"\"hi\"\"\nthere\"\r\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "x, y");
  EXPECT_EQ(rows[1][1], "say \"hi\"\nthere");
}

TEST(Csv, FormatRoundTrip) {
  csv::Row row{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  auto rows = csv::parse(csv::format_row(row));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0], row);
}

TEST(Csv, UnterminatedQuoteIsError) { EXPECT_THROW(csv::parse("a\n\"open\n"), DataError); }

TEST(Corpus, LoadsSixHalfPointScores) {
  std::string text = std::string(kHeader) + "x1,An essay.,Write.,p1,3.5,3.5,3.5,3.5,3.5,3.5\n";
  Corpus c = parse_corpus(text, ellipse_rubric());
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.records[0].scores, std::vector<double>(6, 3.5));
  EXPECT_EQ(c.records[0].prompt, "Write.");
  EXPECT_EQ(c.records[0].prompt_id, "p1");
}

TEST(Corpus, IllegalBandNamesRowAndColumn) {
  std::string text = std::string(kHeader) + "x1,ok,,,3,3,3,3,3,3\nx2,bad,,,3,3,3.7,3,3,3\n";
  try {
    (void)parse_corpus(text, ellipse_rubric());
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("vocabulary"), std::string::npos) << msg;
  }
}

TEST(Corpus, NearBandIsCoerced) {
  std::string text = std::string(kHeader) + "x1,ok,,,3.0000000000001,3,3,3,3,3\n";
  EXPECT_EQ(parse_corpus(text, ellipse_rubric()).records[0].scores[0], 3.0);
}

TEST(Corpus, EmptyPromptIsAbsent) {
  std::string text = std::string(kHeader) + "x1,ok,,,3,3,3,3,3,3\n";
  Corpus c = parse_corpus(text, ellipse_rubric());
  EXPECT_FALSE(c.records[0].prompt.has_value());
  EXPECT_FALSE(c.records[0].prompt_id.has_value());
}

TEST(Corpus, MissingColumnIsSchemaError) {
  std::string text = "essay_id,full_text,prompt,prompt_id,cohesion\nx1,ok,,,3\n";
  try {
    (void)parse_corpus(text, ellipse_rubric());
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("syntax"), std::string::npos);
  }
}

TEST(Corpus, DuplicateIdIsDataError) {
  std::string text = std::string(kHeader) + "x1,a,,,3,3,3,3,3,3\nx1,b,,,3,3,3,3,3,3\n";
  EXPECT_THROW(parse_corpus(text, ellipse_rubric()), DataError);
}

TEST(Corpus, ExtraColumnsIgnored) {
  std::string text = "gender,essay_id,full_text,prompt,prompt_id,cohesion,syntax,vocabulary,phraseology,grammar,"
                     "conventions,grade\nf,x1,ok,,,3,3,3,3,3,3,8\n";
  EXPECT_EQ(parse_corpus(text, ellipse_rubric()).size(), 1u);
}

TEST(Corpus, SaveLoadRoundTripsExactly) {
  Corpus c = synth_corpus(50, ellipse_rubric(), 3);
  c.records[0].full_text = "Quotes \"here\", commas, and\nnewlines.";
  c.records[1].prompt.reset();
  c.records[1].prompt_id.reset();
  const auto path = temp_path("roundtrip.csv");
  save_corpus(c, path.string());
  EXPECT_EQ(load_corpus(path.string(), c.rubric), c);
  std::filesystem::remove(path);
}

TEST(Corpus, LoadMissingFileIsDataError) { EXPECT_THROW(load_corpus("/nonexistent/x.csv", ellipse_rubric()), DataError); }

TEST(Split, NineToOne) {
  auto [train, test] = split(numbered(9000), 0.1, 1);
  EXPECT_EQ(train.size(), 8100u);
  EXPECT_EQ(test.size(), 900u);
}

TEST(Split, IeltsSizes) {
  auto [train, test] = split(numbered(16500), 2000.0 / 16500.0, 1);
  EXPECT_EQ(train.size(), 14500u);
  EXPECT_EQ(test.size(), 2000u);
}

TEST(Split, DeterministicUnderSeed) {
  auto a = split(numbered(100), 0.2, 9);
  auto b = split(numbered(100), 0.2, 9);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  auto c = split(numbered(100), 0.2, 10);
  EXPECT_NE(a.second, c.second);
}

TEST(Split, EmptySideIsUsageError) {
  EXPECT_THROW(split(numbered(5), 0.01, 1), UsageError);
  EXPECT_THROW(split(numbered(5), 0.0, 1), UsageError);
  EXPECT_THROW(split(numbered(5), 1.0, 1), UsageError);
}

TEST(SplitProperty, PartitionForManySeeds) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 20 + seed * 7;
    Corpus c = numbered(n, 2 + seed % 5);
    auto [train, test] = split(c, 0.1 + 0.02 * static_cast<double>(seed % 10), seed, seed % 2 == 0);
    EXPECT_EQ(train.size() + test.size(), n);
    std::set<std::string> ids;
    for (const auto& r : train.records) ids.insert(r.id);
    for (const auto& r : test.records) EXPECT_TRUE(ids.insert(r.id).second) << "overlap " << r.id;
    EXPECT_EQ(ids.size(), n);
  }
}

TEST(SplitProperty, GroupsStayTogether) {
  Corpus c = numbered(200, 13);
  auto [train, test] = split(c, 0.25, 4, true);
  std::set<std::string> train_groups, test_groups;
  for (const auto& r : train.records) train_groups.insert(*r.prompt_id);
  for (const auto& r : test.records) test_groups.insert(*r.prompt_id);
  for (const auto& g : test_groups) EXPECT_FALSE(train_groups.count(g)) << g;
}
