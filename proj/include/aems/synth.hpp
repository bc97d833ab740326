// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "aems/corpus.hpp"
#include "aems/error.hpp"
#include "aems/rubric.hpp"
#include "aems/vocab.hpp"

// Seeded template-grammar essay generator. Each dimension's gold band is a
// deterministic function of one countable surface statistic:
//
//   cohesion, coherence_and_cohesion   connective count            band index = count
//   syntax                             subordinator count          band index = count
//   vocabulary                         distinct advanced words     band index = count
//   phraseology                        stance-adverb count         band index = count
//   grammar                            morphology-error count      band index = K-1-count
//   conventions                        misspelling count           band index = K-1-count
//   task_achievement                   on-prompt keyword count     band index = count
//   overall                            mean of the other indices, rounded half down
//   any other name                     count of its generated marker words
//
// With prompt_dependent set, the first dimension that is not already
// prompt-relative switches to the on-prompt keyword statistic, so the words
// that earn credit depend on the essay's prompt.

namespace aems {

struct SynthOptions {
  std::size_t num_prompts = 8;
  bool prompt_dependent = false;
  std::size_t words_per_essay = 64;
};

// Fixed sentence length keeps the token count of an essay constant.
inline constexpr std::size_t kSentenceWords = 8;

namespace synth_detail {

struct Topic {
  const char* name;
  std::vector<std::string> theme;     // free filler, also named in the prompt
  std::vector<std::string> keywords;  // on-prompt credit words
};

inline const std::vector<Topic>& topics() {
  static const std::vector<Topic> t{
      {"technology",
       {"computers", "phones", "internet", "software", "screens", "devices"},
       {"innovation", "automation", "digital", "network", "privacy", "algorithm", "online", "gadget",
        "virtual", "cyber"}},
      {"environment",
       {"forests", "rivers", "climate", "weather", "oceans", "animals"},
       {"pollution", "recycling", "emissions", "conservation", "renewable", "ecosystem",
        "sustainability", "wildlife", "carbon", "habitat"}},
      {"education",
       {"schools", "teachers", "lessons", "classes", "homework", "exams"},
       {"curriculum", "literacy", "tuition", "pedagogy", "scholarship", "graduation", "syllabus",
        "mentoring", "lecture", "academic"}},
      {"health",
       {"doctors", "hospitals", "exercise", "sleep", "diet", "medicine"},
       {"nutrition", "wellness", "fitness", "vaccine", "therapy", "hygiene", "cardio", "vitamins",
        "clinic", "immunity"}},
      {"travel",
       {"trips", "flights", "hotels", "maps", "luggage", "tourists"},
       {"itinerary", "passport", "destination", "sightseeing", "voyage", "expedition", "airline",
        "souvenir", "backpacking", "excursion"}},
      {"sports",
       {"games", "teams", "players", "coaches", "stadiums", "matches"},
       {"athletics", "tournament", "championship", "referee", "stamina", "league", "training",
        "victory", "medal", "competition"}},
      {"cities",
       {"streets", "buildings", "traffic", "parks", "buses", "neighbors"},
       {"urbanization", "infrastructure", "commuting", "housing", "zoning", "transit", "downtown",
        "skyline", "municipal", "suburbs"}},
      {"work",
       {"jobs", "offices", "bosses", "salaries", "meetings", "careers"},
       {"employment", "productivity", "workplace", "promotion", "colleagues", "contract",
        "freelance", "entrepreneur", "overtime", "internship"}},
  };
  return t;
}

inline const std::vector<std::string>& general_words() {
  static const std::vector<std::string> w{
      "the",   "people", "many",   "think",  "that",  "is",    "are",   "a",     "good",   "way",
      "to",    "and",    "in",     "of",     "for",   "it",    "we",    "can",   "should", "this",
      "some",  "they",   "more",   "very",   "life",  "time",  "have",  "make",  "world",  "idea",
      "our",   "with",   "on",     "be",     "often", "also",  "when",  "what",  "most",   "each"};
  return w;
}

enum class Statistic { count_markers, distinct_markers, inverse_count, topic_keywords, mean_of_others };

struct DimensionPlan {
  Statistic stat = Statistic::count_markers;
  std::vector<std::string> pool;
};

inline std::vector<std::string> generated_pool(const std::string& dim, std::size_t n) {
  std::string stem;
  for (char c : dim)
    if (std::isalpha(static_cast<unsigned char>(c))) stem.push_back(static_cast<char>(std::tolower(c)));
  if (stem.empty()) stem = "dim";
  std::vector<std::string> pool;
  for (std::size_t j = 0; j < n; ++j) pool.push_back(stem + "q" + static_cast<char>('a' + j));
  return pool;
}

inline std::vector<DimensionPlan> plan(const RubricSpec& rubric, const SynthOptions& opt) {
  static const std::vector<std::string> connectives{
      "however", "moreover", "therefore", "furthermore", "consequently", "nevertheless", "meanwhile",
      "additionally", "similarly", "hence"};
  static const std::vector<std::string> subordinators{
      "although", "whereas", "because", "unless", "whenever", "whereby", "which", "whom", "provided",
      "despite"};
  static const std::vector<std::string> advanced{
      "ubiquitous", "meticulous", "pragmatic", "eloquent",  "profound",    "intricate",
      "resilient",  "tenacious",  "ambiguous", "scrutinize", "paradigm",   "coherent",
      "substantive", "nuanced",   "empirical", "salient"};
  static const std::vector<std::string> stance{
      "notably",   "arguably",   "undeniably", "inevitably", "essentially",
      "ultimately", "primarily", "invariably", "remarkably", "fundamentally"};
  static const std::vector<std::string> morphology_errors{
      "goed", "childs", "mouses", "writed", "runned", "buyed", "teached", "thinked", "sheeps", "foots"};
  static const std::vector<std::string> misspellings{
      "becuase", "recieve", "definately", "seperate", "untill", "wich", "tommorow", "beleive",
      "occured", "goverment"};

  const std::size_t k = rubric.num_bands();
  std::vector<DimensionPlan> plans;
  bool have_topic_dim = false;
  for (const auto& dim : rubric.dimensions) {
    DimensionPlan p;
    if (dim == "cohesion" || dim == "coherence_and_cohesion") {
      p.pool = connectives;
    } else if (dim == "syntax") {
      p.pool = subordinators;
    } else if (dim == "vocabulary") {
      p.stat = Statistic::distinct_markers;
      p.pool = advanced;
    } else if (dim == "phraseology") {
      p.pool = stance;
    } else if (dim == "grammar") {
      p.stat = Statistic::inverse_count;
      p.pool = morphology_errors;
    } else if (dim == "conventions") {
      p.stat = Statistic::inverse_count;
      p.pool = misspellings;
    } else if (dim == "task_achievement") {
      p.stat = Statistic::topic_keywords;
      have_topic_dim = true;
    } else if (dim == "overall" && rubric.num_dimensions() > 1) {
      p.stat = Statistic::mean_of_others;
    } else {
      p.pool = generated_pool(dim, std::max<std::size_t>(k, 4));
    }
    if (p.stat == Statistic::distinct_markers && p.pool.size() + 1 < k)
      p.pool = generated_pool(dim, k);
    plans.push_back(std::move(p));
  }
  if (opt.prompt_dependent && !have_topic_dim) {
    for (auto& p : plans)
      if (p.stat != Statistic::mean_of_others) {
        p.stat = Statistic::topic_keywords;
        p.pool.clear();
        break;
      }
  }
  return plans;
}

inline std::string prompt_text(const Topic& t) {
  return "Write an essay about " + std::string(t.name) + ". Consider " + t.theme[0] + ", " + t.theme[1] +
         " and " + t.theme[2] + ".";
}

}  // namespace synth_detail

/// Recovers gold band indices from the documented surface statistics of a
/// generated essay. `prompt_index` selects the topic keyword list.
inline std::vector<std::size_t> synth_recover_bands(const std::string& text, std::size_t prompt_index,
                                                    const RubricSpec& rubric, const SynthOptions& opt = {}) {
  using namespace synth_detail;
  const auto plans = plan(rubric, opt);
  const auto words = split_words(text);
  const std::size_t k = rubric.num_bands();
  std::vector<std::size_t> bands(rubric.num_dimensions(), 0);
  auto count_in = [&](const std::vector<std::string>& pool, bool distinct) {
    std::set<std::string> types;
    std::size_t n = 0;
    for (const auto& w : words)
      if (std::find(pool.begin(), pool.end(), w) != pool.end()) {
        ++n;
        types.insert(w);
      }
    return distinct ? types.size() : n;
  };
  const auto& topic = topics().at(prompt_index % topics().size());
  for (std::size_t d = 0; d < plans.size(); ++d) {
    switch (plans[d].stat) {
      case Statistic::count_markers: bands[d] = count_in(plans[d].pool, false); break;
      case Statistic::distinct_markers: bands[d] = count_in(plans[d].pool, true); break;
      case Statistic::inverse_count: bands[d] = k - 1 - count_in(plans[d].pool, false); break;
      case Statistic::topic_keywords: bands[d] = count_in(topic.keywords, false); break;
      case Statistic::mean_of_others: break;
    }
  }
  for (std::size_t d = 0; d < plans.size(); ++d)
    if (plans[d].stat == Statistic::mean_of_others) {
      std::size_t total = 0, n = 0;
      for (std::size_t o = 0; o < plans.size(); ++o)
        if (plans[o].stat != Statistic::mean_of_others) total += bands[o], ++n;
      // round half down: ceil(total/n - 1/2) == (2*total + n - 1) / (2n)
      bands[d] = (2 * total + n - 1) / (2 * n);
    }
  return bands;
}

inline Corpus synth_corpus(std::size_t n, const RubricSpec& rubric, std::uint64_t seed,
                           const SynthOptions& opt = {}) {
  using namespace synth_detail;
  rubric.validate();
  if (n < 10) throw UsageError("synth_corpus needs at least 10 essays");
  if (opt.num_prompts < 1 || opt.num_prompts > topics().size())
    throw UsageError("synth_corpus supports 1.." + std::to_string(topics().size()) + " prompts");
  const auto plans = plan(rubric, opt);
  const std::size_t k = rubric.num_bands();
  const auto& general = general_words();

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](std::size_t hi_inclusive) {
    return std::uniform_int_distribution<std::size_t>(0, hi_inclusive)(rng);
  };

  Corpus corpus{rubric, {}};
  for (std::size_t e = 0; e < n; ++e) {
    const std::size_t prompt = uniform(opt.num_prompts - 1);
    const Topic& topic = topics()[prompt];
    std::vector<std::size_t> band(plans.size(), 0);
    std::vector<std::string> words;
    for (std::size_t d = 0; d < plans.size(); ++d) {
      const DimensionPlan& p = plans[d];
      if (p.stat == Statistic::mean_of_others) continue;
      band[d] = uniform(k - 1);
      switch (p.stat) {
        case Statistic::count_markers:
          for (std::size_t c = 0; c < band[d]; ++c) words.push_back(p.pool[uniform(p.pool.size() - 1)]);
          break;
        case Statistic::distinct_markers: {
          std::vector<std::string> pool = p.pool;
          std::shuffle(pool.begin(), pool.end(), rng);
          words.insert(words.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(band[d]));
          break;
        }
        case Statistic::inverse_count:
          for (std::size_t c = 0; c < k - 1 - band[d]; ++c) words.push_back(p.pool[uniform(p.pool.size() - 1)]);
          break;
        case Statistic::topic_keywords:
          for (std::size_t c = 0; c < band[d]; ++c)
            words.push_back(topic.keywords[uniform(topic.keywords.size() - 1)]);
          break;
        case Statistic::mean_of_others: break;
      }
    }
    const std::size_t target = std::max(opt.words_per_essay, words.size() + 16);
    while (words.size() < target) {
      // Roughly one filler word in five is a theme word of the prompt.
      if (uniform(4) == 0)
        words.push_back(topic.theme[uniform(topic.theme.size() - 1)]);
      else
        words.push_back(general[uniform(general.size() - 1)]);
    }
    std::shuffle(words.begin(), words.end(), rng);

    std::string text;
    std::size_t i = 0;
    while (i < words.size()) {
      const std::size_t len = std::min(words.size() - i, kSentenceWords);
      for (std::size_t j = 0; j < len; ++j) {
        std::string w = words[i + j];
        if (j == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        if (!text.empty()) text.push_back(' ');
        text += w;
      }
      text.push_back('.');
      i += len;
    }

    EssayRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05zu", e);
    rec.id = id;
    rec.full_text = std::move(text);
    rec.prompt = prompt_text(topic);
    char pid[16];
    std::snprintf(pid, sizeof pid, "p%02zu", prompt);
    rec.prompt_id = pid;
    const auto recovered = synth_recover_bands(rec.full_text, prompt, rubric, opt);
    for (std::size_t d = 0; d < plans.size(); ++d) {
      if (plans[d].stat != Statistic::mean_of_others && recovered[d] != band[d])
        throw std::logic_error("synth_corpus: generated statistic does not match its band");
      rec.scores.push_back(rubric.bands[recovered[d]]);
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

/// Prompt index encoded in a generated prompt_id ("p03" -> 3).
inline std::size_t synth_prompt_index(const EssayRecord& rec) {
  if (!rec.prompt_id || rec.prompt_id->size() < 2 || (*rec.prompt_id)[0] != 'p')
    throw DataError("record '" + rec.id + "' has no generated prompt id");
  return static_cast<std::size_t>(std::stoul(rec.prompt_id->substr(1)));
}

}  // namespace aems
