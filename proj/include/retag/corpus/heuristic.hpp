#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "retag/errors.hpp"
#include "retag/tables/vocab.hpp"

namespace retag {

namespace heuristic {

inline constexpr std::array<std::string_view, 50> kStopwords = {
    "a",    "an",   "the",   "and",  "or",   "but",  "if",   "of",    "at",   "by",   "for",  "with", "about",
    "to",   "from", "in",    "on",   "is",   "are",  "was",  "were",  "be",   "been", "being", "has", "have",
    "had",  "do",   "does",  "did",  "it",   "its",  "this", "that",  "these", "those", "he",  "she", "they",
    "his",  "her",  "their", "as",   "which", "who", "whom", "there", "than", "also", "not"};

inline constexpr std::array<std::string_view, 11> kComparativeWords = {
    "most", "least", "first", "second", "third", "best", "worst", "more", "fewer", "over", "under"};

inline bool is_stopword(std::string_view tok) {
  return std::find(kStopwords.begin(), kStopwords.end(), tok) != kStopwords.end();
}

/// Superlative, comparative or numeric token.
inline bool is_comparative(std::string_view tok) {
  if (std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) return true;
  if (std::find(kComparativeWords.begin(), kComparativeWords.end(), tok) != kComparativeWords.end()) return true;
  const bool alpha = std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalpha(c); });
  if (!alpha || tok.size() < 4) return false;
  return tok.ends_with("est") || tok.ends_with("er");
}

/// Lowercased tokens with punctuation removed.
inline std::vector<std::string> words(std::string_view text) {
  auto toks = tokenize(text);
  std::erase_if(toks, [](const std::string& t) {
    return std::none_of(t.begin(), t.end(), [](unsigned char c) { return std::isalnum(c) || c >= 0x80; });
  });
  return toks;
}

inline std::size_t token_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace heuristic

/// 100 * (1 - d / max(len_a, len_b)) rounded half-up, d the token-level
/// Levenshtein distance.
inline int fuzzy_ratio(std::string_view a, std::string_view b) {
  const auto ta = heuristic::words(a), tb = heuristic::words(b);
  const std::size_t longest = std::max(ta.size(), tb.size());
  if (longest == 0) return 100;
  const std::size_t d = heuristic::token_edit_distance(ta, tb);
  // round(100 * (longest - d) / longest) with halves rounded up, in integers
  return static_cast<int>((200 * (longest - d) + longest) / (2 * longest));
}

enum class HeuristicStyle { ToTTo, InfoTabs };

inline HeuristicStyle parse_heuristic_style(std::string_view s) {
  if (s == "totto") return HeuristicStyle::ToTTo;
  if (s == "infotabs") return HeuristicStyle::InfoTabs;
  throw ConfigError("unknown filter style '" + std::string(s) + "' (expected totto or infotabs)");
}

enum class HeuristicLabel { AnalyticalCandidate, DescriptiveCandidate, Unlabeled };

inline std::string_view label_name(HeuristicLabel l) {
  switch (l) {
    case HeuristicLabel::AnalyticalCandidate: return "analytical-candidate";
    case HeuristicLabel::DescriptiveCandidate: return "descriptive-candidate";
    case HeuristicLabel::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

struct HeuristicVerdict {
  HeuristicLabel label = HeuristicLabel::Unlabeled;
  int ratio = 0;
  std::vector<std::string> triggers;
};

inline nlohmann::json to_json(const HeuristicVerdict& v) {
  return {{"label", label_name(v.label)}, {"ratio", v.ratio}, {"triggers", v.triggers}};
}

/// Flags references that go beyond the table text.
///
/// totto: analytical when the reference has a non-stopword missing from the
/// table text, or ratio < 80, or ratio < 85 with a superlative/comparative/
/// numeric token; otherwise descriptive.
/// infotabs: analytical below 75, descriptive above 80, unlabeled between.
inline HeuristicVerdict classify_heuristic(std::string_view reference, std::string_view table_text,
                                           HeuristicStyle style) {
  HeuristicVerdict v;
  v.ratio = fuzzy_ratio(reference, table_text);
  if (style == HeuristicStyle::InfoTabs) {
    if (v.ratio < 75) {
      v.label = HeuristicLabel::AnalyticalCandidate;
      v.triggers.emplace_back("ratio<75");
    } else if (v.ratio > 80) {
      v.label = HeuristicLabel::DescriptiveCandidate;
      v.triggers.emplace_back("ratio>80");
    }
    return v;
  }
  const auto ref = heuristic::words(reference);
  const auto tab = heuristic::words(table_text);
  const std::set<std::string> table_words(tab.begin(), tab.end());
  if (std::any_of(ref.begin(), ref.end(),
                  [&](const auto& t) { return !heuristic::is_stopword(t) && !table_words.count(t); }))
    v.triggers.emplace_back("novel-word");
  if (v.ratio < 80) v.triggers.emplace_back("ratio<80");
  if (v.ratio < 85 && std::any_of(ref.begin(), ref.end(), [](const auto& t) { return heuristic::is_comparative(t); }))
    v.triggers.emplace_back("ratio<85+comparative");
  v.label = v.triggers.empty() ? HeuristicLabel::DescriptiveCandidate : HeuristicLabel::AnalyticalCandidate;
  return v;
}

}  // namespace retag
