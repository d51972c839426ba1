#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "retag/io/run_config.hpp"
#include "retag/trainer/trainer.hpp"

// Train-and-evaluate runs used by `retag ablate` and the acceptance suite.

namespace retag {

/// Vocabulary over the tables, references and every question template, so
/// any tag combination maps to known words.
inline Vocab corpus_vocab(const std::vector<const std::vector<Instance>*>& corpora, int min_count = 1) {
  std::vector<std::string> texts;
  for (auto c : kAllCategories) texts.push_back(build_question(Strategy::ReTAG, CategorySet{c}));
  texts.push_back(build_question(Strategy::NoTags, CategorySet::descriptive()));
  for (const auto* corpus : corpora)
    for (const auto& inst : *corpus) {
      texts.push_back(linearize(inst.table, inst.highlights));
      texts.push_back(inst.reference);
    }
  return Vocab::build(texts, min_count);
}

struct Variant {
  std::string name;  // notags, tags, retag2, retag6
  Strategy strategy = Strategy::ReTAG;
  int codebook_count = 6;
  bool ci = true;
  bool pretrain = true;

  std::string label() const {
    return name + (strategy == Strategy::ReTAG ? std::string(ci ? "/ci" : "/no-ci") : std::string()) +
           (pretrain ? "/pretrain" : "/no-pretrain");
  }
};

inline Variant parse_variant(const std::string& name) {
  if (name == "notags") return {name, Strategy::NoTags, 6};
  if (name == "tags") return {name, Strategy::Tags, 6};
  if (name == "retag2") return {name, Strategy::ReTAG, 2};
  if (name == "retag6" || name == "retag") return {"retag6", Strategy::ReTAG, 6};
  throw ConfigError("unknown variant '" + name + "' (expected notags, tags, retag2, retag6)");
}

struct ExperimentData {
  std::vector<Instance> pretrain;  // may be empty
  std::vector<Instance> train;
  std::vector<Instance> test;
};

struct RunResult {
  Variant variant;
  std::uint64_t seed = 0;
  TrainReport training;
  EvalReport gold;
  std::optional<EvalReport> random_tags;
  std::optional<ModelParams<float>> model;  // kept when RunOptions::keep_model
  double seconds = 0;
};

/// Corpus BLEU-1 over the records accepted by `keep`; nullopt when none are.
template <typename Pred>
std::optional<double> slice_bleu1(const EvalReport& rep, Pred keep) {
  std::vector<std::string> c, r;
  for (const auto& rec : rep.records)
    if (keep(rec)) {
      c.push_back(rec.prediction);
      r.push_back(rec.reference);
    }
  if (c.empty()) return std::nullopt;
  return bleu(c, r, 1);
}

inline std::optional<double> multi_category_bleu1(const EvalReport& rep) {
  return slice_bleu1(rep, [](const EvalRecord& r) { return r.categories.size() >= 2; });
}

struct RunOptions {
  bool random_tags = false;  // also evaluate with random analytical tags
  int threads = 1;
  std::uint64_t eval_seed = 0;
  bool keep_model = false;
};

/// Initializes a model for `variant`, optionally pretrains, fine-tunes on
/// data.train and evaluates on data.test with the config's decoding setup.
inline RunResult run_variant(const RunConfig& base, const Variant& variant, const Vocab& vocab,
                             const ExperimentData& data, std::uint64_t seed, const RunOptions& ro = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  res.variant = variant;
  res.seed = seed;
  ModelConfig mc = base.model;
  mc.strategy = variant.strategy;
  mc.codebook_count = variant.codebook_count;
  mc.vocab_size = static_cast<int>(vocab.size());
  TrainConfig tc = base.train;
  tc.seed = seed;
  tc.ci_enabled = variant.ci;
  auto p = ModelParams<float>::init(mc, seed);
  if (variant.pretrain && !data.pretrain.empty())
    res.training.append(pretrain(p, encode_corpus(vocab, data.pretrain, mc.strategy), tc));
  res.training.append(finetune(p, encode_corpus(vocab, data.train, mc.strategy), tc));
  res.training.seed = seed;

  EvalOptions eo;
  eo.beam = base.eval.beam;
  eo.max_len = base.eval.max_len;
  eo.metric = base.metric;
  eo.threads = ro.threads;
  eo.seed = ro.eval_seed;
  res.gold = evaluate(p, vocab, data.test, eo);
  if (ro.random_tags) {
    eo.random_tags = true;
    res.random_tags = evaluate(p, vocab, data.test, eo);
  }
  if (ro.keep_model) res.model = std::move(p);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline nlohmann::json to_json(const RunResult& r) {
  auto multi = multi_category_bleu1(r.gold);
  nlohmann::json j{{"variant", r.variant.name},
                   {"label", r.variant.label()},
                   {"strategy", strategy_name(r.variant.strategy)},
                   {"codebook_count", r.variant.codebook_count},
                   {"ci", r.variant.ci},
                   {"pretrain", r.variant.pretrain},
                   {"seed", r.seed},
                   {"overall", to_json(r.gold.groups.overall)},
                   {"analytical", to_json(r.gold.groups.analytical)},
                   {"descriptive", to_json(r.gold.groups.descriptive)},
                   {"multi_category_bleu1", multi ? nlohmann::json(*multi) : nlohmann::json(nullptr)},
                   {"ci_accuracy", r.gold.ci_accuracy ? nlohmann::json(*r.gold.ci_accuracy) : nlohmann::json(nullptr)},
                   {"final_train_loss", r.training.records.empty() ? 0.0 : r.training.records.back().loss.total},
                   {"meta", {{"seconds", r.seconds}}}};
  if (r.random_tags) j["random_tags_overall"] = to_json(r.random_tags->groups.overall);
  return j;
}

}  // namespace retag
