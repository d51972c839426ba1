#include <gtest/gtest.h>

#include "oracles.hpp"
#include "retag/metrics/metrics.hpp"

using namespace retag;

namespace {

// Straight transcription of corpus BLEU over whitespace-split tokens.
double bleu_oracle(const std::vector<std::string>& cands, const std::vector<std::string>& refs, int order) {
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  };
  std::vector<double> hit(static_cast<std::size_t>(order)), tot(static_cast<std::size_t>(order));
  double c_len = 0, r_len = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto c = split(cands[i]), r = split(refs[i]);
    c_len += static_cast<double>(c.size());
    r_len += static_cast<double>(r.size());
    for (int n = 1; n <= order; ++n) {
      std::map<std::string, int> cc, rc;
      for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= c.size(); ++s) {
        std::string g;
        for (int t = 0; t < n; ++t) g += c[s + static_cast<std::size_t>(t)] + "\x1f";
        ++cc[g];
      }
      for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= r.size(); ++s) {
        std::string g;
        for (int t = 0; t < n; ++t) g += r[s + static_cast<std::size_t>(t)] + "\x1f";
        ++rc[g];
      }
      for (auto& [g, k] : cc) {
        tot[static_cast<std::size_t>(n - 1)] += k;
        hit[static_cast<std::size_t>(n - 1)] += std::min(k, rc[g]);
      }
    }
  }
  double logp = 0;
  for (int n = 0; n < order; ++n) {
    if (hit[static_cast<std::size_t>(n)] == 0) return 0;
    logp += std::log(hit[static_cast<std::size_t>(n)] / tot[static_cast<std::size_t>(n)]);
  }
  const double bp = c_len > r_len ? 1.0 : std::exp(1 - r_len / c_len);
  return 100 * bp * std::exp(logp / order);
}

std::string random_sentence(Rng& rng, int max_len) {
  static const char* words[] = {"a", "b", "c", "d", "e", "f"};
  std::string s;
  const int n = rng.uniform_int(1, max_len);
  for (int i = 0; i < n; ++i) s += std::string(s.empty() ? "" : " ") + words[rng.uniform_int(0, 5)];
  return s;
}

}  // namespace

TEST(Bleu, HandExampleWithBrevityPenalty) {
  EXPECT_NEAR(bleu({"a b c d"}, {"a b c d e"}, 1), 100 * std::exp(-0.25), 1e-9);
  EXPECT_NEAR(bleu({"a b c d"}, {"a b c d e"}, 1), 77.8800783, 1e-6);
}

TEST(Bleu, IdentityDisjointAndErrors) {
  for (int n = 1; n <= 4; ++n) EXPECT_DOUBLE_EQ(bleu({"the cat sat on the mat"}, {"the cat sat on the mat"}, n), 100.0);
  EXPECT_EQ(bleu({"x y z"}, {"a b c"}, 1), 0.0);
  EXPECT_THROW(bleu({}, {}, 4), ContractError);
  EXPECT_THROW(bleu({"a"}, {"a", "b"}, 4), ContractError);
  EXPECT_THROW(bleu({"a"}, {"a"}, 5), ContractError);
}

TEST(Bleu, MatchesOracleOnRandomCorpora) {
  Rng rng(21, "bleu");
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> c, r;
    const int n = rng.uniform_int(1, 5);
    for (int i = 0; i < n; ++i) {
      c.push_back(random_sentence(rng, 9));
      r.push_back(random_sentence(rng, 9));
    }
    for (int order : {1, 2, 4}) EXPECT_NEAR(bleu(c, r, order), bleu_oracle(c, r, order), 1e-9);
  }
}

TEST(Bleu, InvariantToCorpusOrder) {
  Rng rng(22, "bleu-order");
  std::vector<std::string> c, r;
  for (int i = 0; i < 8; ++i) {
    c.push_back(random_sentence(rng, 7));
    r.push_back(random_sentence(rng, 7));
  }
  const double base = bleu(c, r, 2);
  std::vector<std::size_t> idx(c.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < 10; ++k) {
    rng.shuffle(std::span<std::size_t>(idx));
    std::vector<std::string> c2, r2;
    for (auto i : idx) {
      c2.push_back(c[i]);
      r2.push_back(r[i]);
    }
    EXPECT_NEAR(bleu(c2, r2, 2), base, 1e-9);
  }
}

TEST(Rouge, Examples) {
  EXPECT_DOUBLE_EQ(rouge_l("a b c", "a b c"), 1.0);
  EXPECT_NEAR(rouge_l("a b c", "a x c"), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(rouge_l("", "a b"), 0.0);
  EXPECT_EQ(rouge_l("x y", "a b"), 0.0);
  EXPECT_EQ(lcs_length({"a", "b", "c", "d"}, {"b", "d"}), 2u);
}

TEST(Parent, HandExamples) {
  EXPECT_NEAR(parent("a b", "a b", {"a"}, 0.1), 1.0, 1e-9);
  const double r = std::pow(0.5, 0.1);
  EXPECT_NEAR(parent("a b", "a b", {"a", "z"}, 0.1), 2 * r / (1 + r), 1e-9);
  EXPECT_NEAR(parent("a b", "a b", {"a", "z"}, 0.1), 0.9653, 1e-4);  // quoted to four places
}

TEST(Parent, EntailedPrecisionCreditsTableTokens) {
  // cand "a q c", ref "a q", table {c}:
  //   Ep(1) = 1 (c is entailed), Ep(2) = (1 + 1/2) / 2, Ep(3) = 1/3, no 4-grams
  //   R_ref = 1 (unigram and bigram recall; the reference has no trigram)
  //   R_tab = 1
  const double p = std::cbrt(1.0 * 0.75 / 3.0);
  EXPECT_NEAR(parent("a q c", "a q", {"c"}, 0.5), 2 * p / (p + 1), 1e-9);
  // λ = 1: recall is R_tab = 1; Ep(1) = 1, Ep(2) = 1/2 ("a q" is half entailed)
  const double half = std::sqrt(0.5);
  EXPECT_NEAR(parent("a q", "a b", {"q"}, 1.0), 2 * half / (half + 1), 1e-12);
  // a zero reference recall at any order collapses R_ref
  EXPECT_EQ(parent("a q", "a b", {"q"}, 0.0), 0.0);
}

TEST(Parent, LambdaZeroIgnoresTableRecall) {
  Rng rng(23, "parent");
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_sentence(rng, 6), r = random_sentence(rng, 6);
    EXPECT_EQ(parent(c, r, {"a"}, 0.0), parent(c, r, {"a", "zz", "yy"}, 0.0));
  }
}

TEST(Parent, BoundedAndMaximalOnIdentity) {
  Rng rng(24, "parent-bounds");
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = random_sentence(rng, 6), r = random_sentence(rng, 6);
    std::set<std::string> omega;
    for (const auto& t : tokenize(random_sentence(rng, 3))) omega.insert(t);
    const double s = parent(c, r, omega, 0.1);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0 + 1e-12);
    std::set<std::string> inside;
    for (const auto& t : tokenize(r)) inside.insert(t);
    EXPECT_NEAR(parent(r, r, inside, 0.1), 1.0, 1e-12);
  }
  EXPECT_THROW(parent("a", "a", {}, 1.5), ContractError);
}

TEST(Parent, TableTokensFollowHighlights) {
  const auto t = fixture::small_table();
  EXPECT_EQ(table_tokens(t, {{1, 1}}), (std::set<std::string>{"5"}));
  EXPECT_EQ(table_tokens(t, {}), (std::set<std::string>{"june", "3", "july", "5"}));
}

TEST(CategoryReport, Grouping) {
  auto rec = [](CategorySet cats, std::string pred) {
    EvalRecord r;
    r.prediction = pred;
    r.reference = "a b c";
    r.rougeL = rouge_l(pred, r.reference);
    r.categories = cats;
    r.analytical = cats.is_analytical();
    return r;
  };
  std::vector<EvalRecord> only_num{rec({Category::Numerical}, "a b c"), rec({Category::Numerical}, "a b")};
  const auto solo = category_report(only_num);
  EXPECT_EQ(solo.per_category.at("numerical").bleu4, solo.overall.bleu4);
  EXPECT_EQ(solo.per_category.at("numerical").n, solo.overall.n);

  std::vector<EvalRecord> mixed{rec({Category::Numerical, Category::Temporal}, "a b c"),
                                rec({Category::Numerical, Category::Temporal, Category::Entity}, "a c"),
                                rec({Category::Entity}, "a"), rec(CategorySet::descriptive(), "c")};
  const auto rep = category_report(mixed);
  EXPECT_EQ(rep.per_cardinality.at("2").n, 1u);
  EXPECT_EQ(rep.per_cardinality.at("3").n, 1u);
  EXPECT_EQ(rep.per_category.count("numerical"), 0u);
  EXPECT_EQ(rep.per_category.at("entity").n, 1u);
  EXPECT_EQ(rep.per_category.at("descriptive").n, 1u);
  EXPECT_EQ(rep.analytical.n, 3u);
  EXPECT_EQ(rep.overall.n, rep.analytical.n + rep.descriptive.n);
  EXPECT_EQ(rep.per_cardinality.at("2").n + rep.per_cardinality.at("3").n + rep.per_category.at("entity").n,
            rep.analytical.n);
}

TEST(CategoryReport, AggregatesRecomputableFromRecords) {
  auto spec = GeneratorSpec::defaults();
  spec.seed = 8;
  const auto data = synth_generate(spec, 60);
  std::vector<EvalRecord> records;
  std::vector<std::string> c, r;
  double rouge = 0;
  for (const auto& inst : data) {
    const auto pred = inst.reference.substr(0, inst.reference.size() / 2);
    records.push_back(score_instance(inst, pred, {}));
    c.push_back(pred);
    r.push_back(inst.reference);
    rouge += rouge_l(pred, inst.reference);
  }
  const auto rep = make_eval_report(records);
  EXPECT_NEAR(rep.groups.overall.bleu4, bleu(c, r, 4), 1e-12);
  EXPECT_NEAR(rep.groups.overall.rougeL, rouge / 60, 1e-12);
  EXPECT_FALSE(rep.ci_accuracy.has_value());
}

TEST(Report, JsonFieldNames) {
  auto spec = GeneratorSpec::defaults();
  const auto data = synth_generate(spec, 10);
  std::vector<EvalRecord> records;
  for (const auto& inst : data) records.push_back(score_instance(inst, inst.reference, {}));
  records[0].ci_correct = true;
  const auto j = to_json(make_eval_report(records));
  for (const char* k : {"overall", "analytical", "descriptive", "per_category", "per_cardinality", "ci_accuracy", "records"})
    EXPECT_TRUE(j.contains(k)) << k;
  for (const char* k : {"n", "bleu1", "bleu4", "rougeL", "parent"}) EXPECT_TRUE(j["overall"].contains(k)) << k;
  for (const char* k : {"id", "prediction", "reference", "bleu1", "rougeL", "parent", "categories", "kind"})
    EXPECT_TRUE(j["records"][0].contains(k)) << k;
  EXPECT_EQ(j["ci_accuracy"], 1.0);
}

TEST(Config, LambdaRange) {
  EXPECT_THROW(metric_config_from_json({{"parent_lambda", 2.0}}), ConfigError);
  EXPECT_EQ(metric_config_from_json({{"parent_lambda", 0.3}}).parent_lambda, 0.3);
}
