#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"
#include "retag/corpus/generator.hpp"
#include "retag/corpus/heuristic.hpp"
#include "retag/corpus/split.hpp"

using namespace retag;

namespace {

const std::vector<Instance>& big_corpus() {
  static const auto corpus = [] {
    auto spec = GeneratorSpec::defaults();
    spec.seed = 2024;
    return synth_generate(spec, 10000);
  }();
  return corpus;
}

}  // namespace

TEST(Generator, FirstInstanceIsDeterministic) {
  auto spec = GeneratorSpec::defaults();
  spec.seed = 5;
  EXPECT_EQ(to_json(synth_generate(spec, 1)[0]), to_json(synth_generate(spec, 3)[0]));
  spec.seed = 6;
  EXPECT_NE(to_json(synth_generate(spec, 1)[0]), to_json(synth_generate(GeneratorSpec::defaults(), 1)[0]));
}

TEST(Generator, MixFrequenciesWithinOnePercent) {
  std::map<std::string, double> counts;
  for (const auto& inst : big_corpus()) counts[inst.categories.key()] += 1;
  for (const auto& [set, p] : GeneratorSpec::defaults().mix)
    EXPECT_NEAR(counts[set.key()] / 10000.0, p, 0.01) << set.key();
}

TEST(Generator, WarmestMonthHoldsTheArgmax) {
  int checked = 0;
  for (const auto& inst : big_corpus()) {
    if (!inst.categories.contains(Category::Commonsense)) continue;
    const auto rows = oracle::parse_rows(inst.table);
    for (const auto& clause : oracle::split_clauses(inst.reference)) {
      for (const char* word : {"warmest", "coolest"}) {
        const auto tail = std::string(" was the ") + word + " month";
        if (!clause.ends_with(tail)) continue;
        const auto month = clause.substr(0, clause.size() - tail.size());
        const bool warm = std::string(word) == "warmest";
        auto best = std::max_element(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
          return warm ? a.temperature < b.temperature : a.temperature > b.temperature;
        });
        EXPECT_EQ(best->month, month) << inst.reference;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Generator, EveryReferenceIsFaithful) {
  for (const auto& inst : big_corpus()) {
    std::string why;
    ASSERT_TRUE(oracle::faithful(inst, &why)) << inst.table.id << ": " << why << "\n" << inst.reference;
  }
}

TEST(Generator, InstancesAreValid) {
  for (const auto& inst : big_corpus()) EXPECT_NO_THROW(inst.validate());
}

TEST(Generator, AnalyticalOnlyMixHasNoDescriptive) {
  auto spec = GeneratorSpec::analytical_only();
  spec.seed = 3;
  for (const auto& inst : synth_generate(spec, 500)) EXPECT_TRUE(inst.analytical());
}

TEST(Generator, ImpossibleMixIsConfigError) {
  auto spec = GeneratorSpec::defaults();
  spec.mix.back().first = CategorySet{Category::Descriptive, Category::Numerical};
  EXPECT_THROW(synth_generate(spec, 1), ConfigError);
  spec = GeneratorSpec::defaults();
  spec.mix.front().second += 0.1;
  EXPECT_THROW(synth_generate(spec, 1), ConfigError);
  EXPECT_THROW(generator_spec_from_json({{"mix", {{"descriptive+numerical", 1.0}}}}), ConfigError);
  EXPECT_THROW(generator_spec_from_json({{"colour", 1}}), ConfigError);
}

TEST(Generator, SpecJsonRoundtrip) {
  auto spec = GeneratorSpec::defaults();
  spec.seed = 77;
  const auto back = generator_spec_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
}

TEST(FuzzyRatio, Examples) {
  EXPECT_EQ(fuzzy_ratio("The cat sat.", "the cat sat"), 100);
  EXPECT_EQ(fuzzy_ratio("a b c", "x y z"), 0);
  EXPECT_EQ(fuzzy_ratio("a b c d", "a b x d"), 75);
  EXPECT_EQ(fuzzy_ratio("", ""), 100);
  EXPECT_EQ(fuzzy_ratio("", "a"), 0);
  // 7/8 = 87.5 rounds half up
  EXPECT_EQ(fuzzy_ratio("a b c d e f g h", "a b c d e f g x"), 88);
}

TEST(FuzzyRatio, SymmetricBoundedAndExactAtHundred) {
  Rng rng(1, "fuzzy");
  const char* pool[] = {"a", "b", "c", "d"};
  auto sentence = [&] {
    std::string s;
    const auto n = rng.uniform_int(0, 6);
    for (int i = 0; i < n; ++i) s += std::string(pool[rng.uniform_int(0, 3)]) + " ";
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    const auto a = sentence(), b = sentence();
    const int r = fuzzy_ratio(a, b);
    EXPECT_EQ(r, fuzzy_ratio(b, a));
    EXPECT_GE(r, 0);
    EXPECT_LE(r, 100);
    EXPECT_EQ(r == 100, heuristic::words(a) == heuristic::words(b)) << a << " | " << b;
  }
}

TEST(FuzzyRatio, FixtureHitsRequestedRatio) {
  for (int r : {74, 75, 78, 79, 80, 81, 83, 84, 85})
    for (bool sup : {false, true}) {
      auto [ref, tab] = fixture::ratio_pair(r, sup);
      EXPECT_EQ(fuzzy_ratio(ref, tab), r);
    }
}

TEST(Heuristic, InfoTabsThresholds) {
  const std::map<int, HeuristicLabel> expect{{74, HeuristicLabel::AnalyticalCandidate},
                                             {75, HeuristicLabel::Unlabeled},
                                             {78, HeuristicLabel::Unlabeled},
                                             {80, HeuristicLabel::Unlabeled},
                                             {81, HeuristicLabel::DescriptiveCandidate}};
  for (auto [ratio, label] : expect) {
    auto [ref, tab] = fixture::ratio_pair(ratio, false);
    const auto v = classify_heuristic(ref, tab, HeuristicStyle::InfoTabs);
    EXPECT_EQ(v.ratio, ratio);
    EXPECT_EQ(v.label, label) << "ratio " << ratio;
  }
}

TEST(Heuristic, ToTToThresholds) {
  struct Case {
    int ratio;
    bool superlative;
    HeuristicLabel label;
  };
  const Case cases[] = {{79, false, HeuristicLabel::AnalyticalCandidate}, {79, true, HeuristicLabel::AnalyticalCandidate},
                        {80, false, HeuristicLabel::DescriptiveCandidate}, {80, true, HeuristicLabel::AnalyticalCandidate},
                        {83, true, HeuristicLabel::AnalyticalCandidate},  {84, false, HeuristicLabel::DescriptiveCandidate},
                        {84, true, HeuristicLabel::AnalyticalCandidate},  {85, false, HeuristicLabel::DescriptiveCandidate},
                        {85, true, HeuristicLabel::DescriptiveCandidate}};
  for (const auto& c : cases) {
    auto [ref, tab] = fixture::ratio_pair(c.ratio, c.superlative);
    const auto v = classify_heuristic(ref, tab, HeuristicStyle::ToTTo);
    EXPECT_EQ(v.ratio, c.ratio);
    EXPECT_EQ(v.label, c.label) << "ratio " << c.ratio << (c.superlative ? " with" : " without") << " superlative";
  }
}

TEST(Heuristic, VerbatimRestatementIsDescriptive) {
  const auto v = classify_heuristic("June 12 goals", "june 12 goals", HeuristicStyle::InfoTabs);
  EXPECT_EQ(v.ratio, 100);
  EXPECT_EQ(v.label, HeuristicLabel::DescriptiveCandidate);
}

TEST(Heuristic, NovelContentWordFlagsToTTo) {
  const auto v = classify_heuristic("june was the warmest month", "june month warmest was sunny", HeuristicStyle::ToTTo);
  EXPECT_EQ(v.label, HeuristicLabel::AnalyticalCandidate);
  const auto w = classify_heuristic("ashford scored goals", "harrow scored goals", HeuristicStyle::ToTTo);
  EXPECT_NE(std::find(w.triggers.begin(), w.triggers.end(), "novel-word"), w.triggers.end());
}

TEST(Heuristic, ComparativeDetector) {
  for (const char* t : {"largest", "bigger", "most", "over", "12", "3rd"}) EXPECT_TRUE(heuristic::is_comparative(t)) << t;
  for (const char* t : {"cat", "her", "best_", "june"}) EXPECT_FALSE(heuristic::is_comparative(t)) << t;
}

TEST(Heuristic, TriggersConsistentWithLabel) {
  for (int r = 60; r <= 100; ++r)
    for (bool sup : {false, true}) {
      auto [ref, tab] = fixture::ratio_pair(r, sup);
      for (auto style : {HeuristicStyle::ToTTo, HeuristicStyle::InfoTabs}) {
        const auto v = classify_heuristic(ref, tab, style);
        // ToTTo style falls back to descriptive when nothing fires; InfoTabs leaves it unlabeled
        const auto silent = style == HeuristicStyle::ToTTo ? HeuristicLabel::DescriptiveCandidate : HeuristicLabel::Unlabeled;
        EXPECT_EQ(v.triggers.empty(), v.label == silent) << r << (sup ? "+sup" : "");
      }
    }
  EXPECT_THROW(parse_heuristic_style("wiki"), ConfigError);
}

TEST(Split, AllTrain) {
  auto spec = GeneratorSpec::defaults();
  auto data = synth_generate(spec, 20);
  auto s = split_instances(data, {1, 0, 0}, 1);
  EXPECT_EQ(s.train.size(), 20u);
  EXPECT_TRUE(s.valid.empty() && s.test.empty());
}

TEST(Split, SameSeedSamePartition) {
  auto data = synth_generate(GeneratorSpec::defaults(), 50);
  auto a = split_instances(data, {0.8, 0.1, 0.1}, 9), b = split_instances(data, {0.8, 0.1, 0.1}, 9);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].table.id, b.test[i].table.id);
}

TEST(Split, SizesFloorWithRemainderToTrain) {
  auto data = synth_generate(GeneratorSpec::defaults(), 37);
  auto s = split_instances(data, {0.5, 0.3, 0.2}, 2);
  EXPECT_EQ(s.valid.size(), 11u);  // floor(11.1)
  EXPECT_EQ(s.test.size(), 7u);    // floor(7.4)
  EXPECT_EQ(s.train.size(), 19u);
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.valid, &s.test})
    for (const auto& inst : *part) EXPECT_TRUE(ids.insert(inst.table.id).second);
  EXPECT_EQ(ids.size(), 37u);
  for (const auto& inst : s.test) EXPECT_EQ(inst.split, Split::Test);
}

TEST(Split, FractionsMustSumToOne) {
  auto data = synth_generate(GeneratorSpec::defaults(), 5);
  EXPECT_THROW(split_instances(data, {0.5, 0.5, 0.5}, 1), ConfigError);
  EXPECT_THROW(split_instances(data, {1.2, -0.1, -0.1}, 1), ConfigError);
}
