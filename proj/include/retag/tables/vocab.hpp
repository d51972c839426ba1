#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "retag/errors.hpp"

namespace retag {

/// Lowercased word/punctuation tokenization shared by the vocabulary and the
/// metrics. Alphanumeric runs (non-ASCII bytes count as alphanumeric, so UTF-8
/// sequences stay intact) form one token; any other non-space character is a
/// token by itself, except the highlight markers `<hl>` and `</hl>`.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      if (text.substr(i, 4) == "<hl>") {
        out.emplace_back("<hl>");
        i += 4;
        continue;
      }
      if (text.substr(i, 5) == "</hl>") {
        out.emplace_back("</hl>");
        i += 5;
        continue;
      }
    }
    if (is_word(c)) {
      std::string tok;
      while (i < text.size() && is_word(static_cast<unsigned char>(text[i])))
        tok += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++])));
      out.push_back(std::move(tok));
      continue;
    }
    out.emplace_back(1, static_cast<char>(c));
    ++i;
  }
  return out;
}

class Vocab {
 public:
  static constexpr int kPad = 0, kBos = 1, kEos = 2, kUnk = 3, kHlOpen = 4, kHlClose = 5;
  static constexpr int kNumSpecials = 6;

  Vocab() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>", "<hl>", "</hl>"}) add(s);
  }

  /// Specials first, then tokens with count >= min_count ordered by
  /// (count desc, token asc).
  static Vocab build(const std::vector<std::string>& corpus, int min_count = 1) {
    if (corpus.empty()) throw ContractError("build_vocab: empty corpus");
    std::map<std::string, long> counts;
    for (const auto& line : corpus)
      for (auto& t : tokenize(line)) ++counts[t];
    std::vector<std::pair<std::string, long>> kept;
    for (auto& [tok, n] : counts)
      if (n >= min_count) kept.emplace_back(tok, n);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab v;
    for (auto& [tok, _] : kept)
      if (!v.contains(tok)) v.add(tok);
    return v;
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    if (tokens.size() < kNumSpecials) throw FormatError("vocab: missing special tokens");
    for (int i = 0; i < kNumSpecials; ++i)
      if (tokens[i] != v.tokens_[i]) throw FormatError("vocab: special token " + std::to_string(i) + " mismatch");
    for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) {
      if (v.contains(tokens[i])) throw FormatError("vocab: duplicate token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw RangeError("vocab: id " + std::to_string(id) + " outside [0, " + std::to_string(tokens_.size()) + ")");
    return tokens_[id];
  }

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  /// <bos> tokens... <eos>; out-of-vocabulary words map to <unk>.
  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids{kBos};
    for (auto& t : tokenize(text)) ids.push_back(id(t));
    ids.push_back(kEos);
    return ids;
  }

  /// Drops special tokens and joins the rest with single spaces.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
      const auto& tok = token(i);
      if (is_special(i)) continue;
      if (!out.empty()) out += ' ';
      out += tok;
    }
    return out;
  }

 private:
  void add(const std::string& tok) {
    ids_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(tok);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace retag
