#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "retag/errors.hpp"
#include "retag/tables/table.hpp"
#include "retag/tables/vocab.hpp"

namespace retag {

struct MetricConfig {
  double parent_lambda = 0.1;
  int bleu_order = 4;

  void validate() const {
    if (!(parent_lambda >= 0 && parent_lambda <= 1)) throw ConfigError("metric: parent lambda must lie in [0, 1]");
    if (bleu_order < 1 || bleu_order > 4) throw ConfigError("metric: bleu order must lie in 1..4");
  }
};

inline nlohmann::json to_json(const MetricConfig& c) { return {{"parent_lambda", c.parent_lambda}, {"bleu_order", c.bleu_order}}; }

inline MetricConfig metric_config_from_json(const nlohmann::json& j, MetricConfig base = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "parent_lambda") base.parent_lambda = it->get<double>();
    else if (it.key() == "bleu_order") base.bleu_order = it->get<int>();
    else throw ConfigError("metric: unknown key '" + it.key() + "'");
  }
  base.validate();
  return base;
}

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<Tokens, long>;

inline NgramCounts ngram_counts(const Tokens& toks, std::size_t n) {
  NgramCounts out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[Tokens(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                                                 toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

/// Corpus BLEU, 0-100. Clipped n-gram matches and totals are pooled over the
/// corpus; no smoothing, so any order without a match scores 0.
inline double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references, int order) {
  if (candidates.empty()) throw ContractError("bleu: empty corpus");
  if (candidates.size() != references.size())
    throw ContractError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");
  if (order < 1 || order > 4) throw ContractError("bleu: order must lie in 1..4");
  std::vector<long> matched(static_cast<std::size_t>(order), 0), total(static_cast<std::size_t>(order), 0);
  long cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = tokenize(candidates[i]);
    const auto r = tokenize(references[i]);
    cand_len += static_cast<long>(c.size());
    ref_len += static_cast<long>(r.size());
    for (int n = 1; n <= order; ++n) {
      const auto cc = ngram_counts(c, static_cast<std::size_t>(n));
      const auto rc = ngram_counts(r, static_cast<std::size_t>(n));
      for (const auto& [g, k] : cc) {
        total[static_cast<std::size_t>(n - 1)] += k;
        auto it = rc.find(g);
        if (it != rc.end()) matched[static_cast<std::size_t>(n - 1)] += std::min(k, it->second);
      }
    }
  }
  if (cand_len == 0) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 0; n < matched.size(); ++n) {
    if (matched[n] == 0 || total[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp = cand_len <= ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)) : 1.0;
  return 100.0 * bp * std::exp(log_sum / order);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L F1 over tokens, 0-1.
inline double rouge_l(const std::string& candidate, const std::string& reference) {
  const auto c = tokenize(candidate), r = tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(c, r));
  if (l == 0) return 0.0;
  const double p = l / static_cast<double>(c.size()), rec = l / static_cast<double>(r.size());
  return 2 * p * rec / (p + rec);
}

/// Table tokens a candidate is checked against: highlighted cell values, or
/// every cell when nothing is highlighted.
inline std::set<std::string> table_tokens(const Table& table, const HighlightSet& highlights) {
  std::set<std::string> omega;
  auto take = [&](const std::string& cell) {
    for (auto& t : tokenize(cell)) omega.insert(t);
  };
  if (highlights.empty()) {
    for (const auto& row : table.rows)
      for (const auto& cell : row) take(cell);
  } else {
    for (const auto& h : highlights) take(table.rows.at(h.row).at(h.col));
  }
  return omega;
}

namespace detail {
// Geometric mean over the orders that produced a value; nullopt entries are
// orders with no n-grams and are left out.
inline double geometric_mean(const std::vector<std::optional<double>>& xs) {
  double log_sum = 0;
  int used = 0;
  for (const auto& x : xs) {
    if (!x) continue;
    if (*x <= 0) return 0.0;
    log_sum += std::log(*x);
    ++used;
  }
  return used ? std::exp(log_sum / used) : 0.0;
}
}  // namespace detail

/// PARENT-style score, 0-1. Precision credits candidate n-grams found in the
/// reference or (fractionally) supported by the table tokens; recall mixes
/// reference recall and table-token recall as R_ref^(1-lambda) * R_tab^lambda.
/// Orders for which a sentence has no n-grams are skipped in the geometric
/// means. With no table tokens, table recall counts as 1.
inline double parent(const std::string& candidate, const std::string& reference, const std::set<std::string>& omega,
                     double lambda) {
  if (!(lambda >= 0 && lambda <= 1)) throw ContractError("parent: lambda must lie in [0, 1]");
  const auto c = tokenize(candidate), r = tokenize(reference);
  if (c.empty()) return 0.0;
  std::vector<std::optional<double>> prec, rec;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cc = ngram_counts(c, n), rc = ngram_counts(r, n);
    if (!cc.empty()) {
      double num = 0, den = 0;
      for (const auto& [g, k] : cc) {
        double w = 0;
        for (const auto& t : g) w += omega.count(t) ? 1.0 : 0.0;
        w /= static_cast<double>(g.size());
        const double credit = rc.count(g) ? 1.0 : w;
        num += static_cast<double>(k) * credit;
        den += static_cast<double>(k);
      }
      prec.emplace_back(num / den);
    }
    if (!rc.empty()) {
      double num = 0, den = 0;
      for (const auto& [g, k] : rc) {
        auto it = cc.find(g);
        num += static_cast<double>(it == cc.end() ? 0 : std::min(k, it->second));
        den += static_cast<double>(k);
      }
      rec.emplace_back(num / den);
    }
  }
  const double p = detail::geometric_mean(prec);
  const double r_ref = detail::geometric_mean(rec);
  double r_tab = 1.0;
  if (!omega.empty()) {
    const std::set<std::string> cand_set(c.begin(), c.end());
    std::size_t hit = 0;
    for (const auto& t : omega) hit += cand_set.count(t);
    r_tab = static_cast<double>(hit) / static_cast<double>(omega.size());
  }
  // 0^0 is 1 here, so lambda = 0 ignores table recall entirely.
  const double recall = (lambda == 1 ? 1.0 : std::pow(r_ref, 1 - lambda)) * (lambda == 0 ? 1.0 : std::pow(r_tab, lambda));
  return p + recall > 0 ? 2 * p * recall / (p + recall) : 0.0;
}

/// Per-instance evaluation record.
struct EvalRecord {
  std::string id;
  std::string prediction;
  std::string reference;
  double bleu1 = 0;   // sentence-level
  double rougeL = 0;
  double parent = 0;
  CategorySet categories;
  bool analytical = false;
  std::optional<bool> ci_correct;  // set when a CI prediction was made
};

inline EvalRecord score_instance(const Instance& inst, const std::string& prediction, const MetricConfig& mc) {
  EvalRecord r;
  r.id = inst.table.id;
  r.prediction = prediction;
  r.reference = inst.reference;
  r.bleu1 = bleu({prediction}, {inst.reference}, 1);
  r.rougeL = rouge_l(prediction, inst.reference);
  r.parent = parent(prediction, inst.reference, table_tokens(inst.table, inst.highlights), mc.parent_lambda);
  r.categories = inst.categories;
  r.analytical = inst.analytical();
  return r;
}

struct GroupScores {
  std::size_t n = 0;
  double bleu1 = 0, bleu4 = 0, rougeL = 0, parent = 0;
};

inline GroupScores aggregate(const std::vector<const EvalRecord*>& records, int bleu_order = 4) {
  GroupScores g;
  g.n = records.size();
  if (records.empty()) return g;
  std::vector<std::string> cands, refs;
  for (const auto* r : records) {
    cands.push_back(r->prediction);
    refs.push_back(r->reference);
    g.rougeL += r->rougeL;
    g.parent += r->parent;
  }
  g.rougeL /= static_cast<double>(g.n);
  g.parent /= static_cast<double>(g.n);
  g.bleu1 = bleu(cands, refs, 1);
  g.bleu4 = bleu(cands, refs, bleu_order);
  return g;
}

struct CategoryReport {
  GroupScores overall, analytical, descriptive;
  std::map<std::string, GroupScores> per_category;     // single-category instances
  std::map<std::string, GroupScores> per_cardinality;  // analytical instances with |r| = 2 or 3
};

/// Groups: overall, analytical/descriptive, single-category instances by
/// category, and multi-category analytical instances by set size.
inline CategoryReport category_report(const std::vector<EvalRecord>& records, int bleu_order = 4) {
  std::vector<const EvalRecord*> all, ana, desc;
  std::map<std::string, std::vector<const EvalRecord*>> by_cat, by_card;
  for (const auto& r : records) {
    all.push_back(&r);
    (r.analytical ? ana : desc).push_back(&r);
    const auto k = r.categories.size();
    if (k == 1) by_cat[std::string(category_name(r.categories.members().front()))].push_back(&r);
    else if (k >= 2) by_card[std::to_string(k)].push_back(&r);
  }
  CategoryReport rep;
  rep.overall = aggregate(all, bleu_order);
  rep.analytical = aggregate(ana, bleu_order);
  rep.descriptive = aggregate(desc, bleu_order);
  for (auto& [k, v] : by_cat) rep.per_category[k] = aggregate(v, bleu_order);
  for (auto& [k, v] : by_card) rep.per_cardinality[k] = aggregate(v, bleu_order);
  return rep;
}

struct EvalReport {
  std::vector<EvalRecord> records;
  CategoryReport groups;
  std::optional<double> ci_accuracy;
  nlohmann::json meta;  // strategy, beam, tag mode, ...
};

inline EvalReport make_eval_report(std::vector<EvalRecord> records, int bleu_order = 4) {
  EvalReport rep;
  rep.records = std::move(records);
  rep.groups = category_report(rep.records, bleu_order);
  std::size_t seen = 0, right = 0;
  for (const auto& r : rep.records)
    if (r.ci_correct) {
      ++seen;
      right += *r.ci_correct;
    }
  if (seen) rep.ci_accuracy = static_cast<double>(right) / static_cast<double>(seen);
  return rep;
}

inline nlohmann::json to_json(const GroupScores& g) {
  nlohmann::json j{{"n", g.n}};
  if (g.n == 0) {
    for (const char* k : {"bleu1", "bleu4", "rougeL", "parent"}) j[k] = nullptr;
  } else {
    j["bleu1"] = g.bleu1;
    j["bleu4"] = g.bleu4;
    j["rougeL"] = g.rougeL;
    j["parent"] = g.parent;
  }
  return j;
}

inline nlohmann::json to_json(const EvalRecord& r) {
  std::vector<std::string> cats;
  for (auto c : r.categories.members()) cats.emplace_back(category_name(c));
  nlohmann::json j{{"id", r.id},           {"prediction", r.prediction}, {"reference", r.reference},
                   {"bleu1", r.bleu1},     {"rougeL", r.rougeL},         {"parent", r.parent},
                   {"categories", cats},   {"kind", r.analytical ? "analytical" : "descriptive"}};
  if (r.ci_correct) j["ci_correct"] = *r.ci_correct;
  return j;
}

inline nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json per_cat = nlohmann::json::object(), per_card = nlohmann::json::object();
  for (const auto& [k, g] : rep.groups.per_category) per_cat[k] = to_json(g);
  for (const auto& [k, g] : rep.groups.per_cardinality) per_card[k] = to_json(g);
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : rep.records) recs.push_back(to_json(r));
  nlohmann::json j{{"overall", to_json(rep.groups.overall)},
                   {"analytical", to_json(rep.groups.analytical)},
                   {"descriptive", to_json(rep.groups.descriptive)},
                   {"per_category", per_cat},
                   {"per_cardinality", per_card},
                   {"ci_accuracy", rep.ci_accuracy ? nlohmann::json(*rep.ci_accuracy) : nlohmann::json(nullptr)},
                   {"records", recs}};
  if (!rep.meta.is_null()) j["meta"] = rep.meta;
  return j;
}

}  // namespace retag
