#pragma once

// Independent reference computations and fixtures shared by the test
// binaries. Nothing here calls the code path it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "retag/corpus/generator.hpp"
#include "retag/corpus/lexicon.hpp"
#include "retag/model/params.hpp"
#include "retag/numerics/rng.hpp"
#include "retag/numerics/tensor.hpp"
#include "retag/tables/table.hpp"
#include "retag/tables/vocab.hpp"

namespace oracle {

/// Exhaustive nearest neighbour in long double; first minimum wins.
inline int nearest_code(const std::vector<double>& codes, std::size_t k, std::size_t h, const double* row) {
  int best = -1;
  long double best_d = 0;
  for (std::size_t j = 0; j < k; ++j) {
    long double d = 0;
    for (std::size_t t = 0; t < h; ++t) {
      const long double diff = static_cast<long double>(row[t]) - codes[j * h + t];
      d += diff * diff;
    }
    if (best < 0 || d < best_d) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return best;
}

/// Central differences of a scalar function of a flat parameter vector.
inline std::vector<double> finite_differences(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ---- synthetic corpus faithfulness ----------------------------------------

struct ParsedRow {
  std::string month, club;
  int founded, dissolved, goals, temperature;
};

inline std::vector<ParsedRow> parse_rows(const retag::Table& t) {
  std::vector<ParsedRow> rows;
  for (const auto& r : t.rows)
    rows.push_back({r.at(0), r.at(1), std::stoi(r.at(2)), std::stoi(r.at(3)), std::stoi(r.at(4)), std::stoi(r.at(5))});
  return rows;
}

/// Alias -> club name, rebuilt from the nickname tables.
inline std::map<std::string, std::string> alias_table() {
  namespace lx = retag::lexicon;
  std::map<std::string, std::string> out;
  for (std::size_t p = 0; p < lx::kPlaces.size(); ++p)
    for (std::size_t m = 0; m < lx::kMascots.size(); ++m)
      out["the " + std::string(lx::kPlaceNicknames[p]) + " " + std::string(lx::kMascotNicknames[m])] =
          std::string(lx::kPlaces[p]) + " " + std::string(lx::kMascots[m]);
  return out;
}

inline std::vector<std::string> split_clauses(std::string text) {
  if (text.size() >= 2 && text.substr(text.size() - 2) == " .") text.resize(text.size() - 2);
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = text.find(" and ", start);
    out.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 5;
  }
  return out;
}

/// Re-derives one clause's claim from the table by brute force. Returns the
/// category the clause belongs to, or nullopt when the claim is false or the
/// clause matches no known template.
inline std::optional<retag::Category> check_clause(const std::string& clause, const std::vector<ParsedRow>& rows) {
  using retag::Category;
  static const std::regex tabular(R"(^(\d+) of the (\d+) clubs scored more goals than (.+)$)");
  static const std::regex diff(R"(^(.+) scored (\d+) more goals than (.+)$)");
  static const std::regex total(R"(^the clubs scored (-?\d+) goals in total$)");
  static const std::regex extreme(R"(^the (highest|lowest) number of goals was (-?\d+)$)");
  static const std::regex active(R"(^(.+) was active for (-?\d+) years$)");
  static const std::regex weather(R"(^(\w+) was the (warmest|coolest) month$)");
  static const std::regex alias(R"(^(the \w+ \w+) played in (\w+)$)");
  static const std::regex descr(R"(^(.+) scored (-?\d+) goals in (\w+)$)");
  static const auto aliases = alias_table();
  auto find_club = [&](const std::string& name) -> const ParsedRow* {
    for (const auto& r : rows)
      if (r.club == name) return &r;
    return nullptr;
  };
  std::smatch m;
  if (std::regex_match(clause, m, tabular)) {
    const auto* r = find_club(m[3]);
    if (!r || std::stoul(m[2]) != rows.size()) return std::nullopt;
    int k = 0;
    for (const auto& o : rows) k += o.goals > r->goals;
    return k == std::stoi(m[1]) ? std::optional(Category::Tabular) : std::nullopt;
  }
  if (std::regex_match(clause, m, diff)) {
    const auto *a = find_club(m[1]), *b = find_club(m[3]);
    if (!a || !b || a == b) return std::nullopt;
    return a->goals - b->goals == std::stoi(m[2]) && a->goals >= b->goals ? std::optional(Category::Numerical)
                                                                          : std::nullopt;
  }
  if (std::regex_match(clause, m, total)) {
    int s = 0;
    for (const auto& r : rows) s += r.goals;
    return s == std::stoi(m[1]) ? std::optional(Category::Numerical) : std::nullopt;
  }
  if (std::regex_match(clause, m, extreme)) {
    int best = rows.front().goals;
    for (const auto& r : rows) best = m[1] == "highest" ? std::max(best, r.goals) : std::min(best, r.goals);
    return best == std::stoi(m[2]) ? std::optional(Category::Numerical) : std::nullopt;
  }
  if (std::regex_match(clause, m, active)) {
    const auto* r = find_club(m[1]);
    return r && r->dissolved - r->founded == std::stoi(m[2]) ? std::optional(Category::Temporal) : std::nullopt;
  }
  if (std::regex_match(clause, m, weather)) {
    const ParsedRow* best = &rows.front();
    for (const auto& r : rows)
      if (m[2] == "warmest" ? r.temperature > best->temperature : r.temperature < best->temperature) best = &r;
    return best->month == m[1] ? std::optional(Category::Commonsense) : std::nullopt;
  }
  if (std::regex_match(clause, m, alias)) {
    auto it = aliases.find(m[1]);
    if (it == aliases.end()) return std::nullopt;
    const auto* r = find_club(it->second);
    return r && r->month == m[2] ? std::optional(Category::Entity) : std::nullopt;
  }
  if (std::regex_match(clause, m, descr)) {
    const auto* r = find_club(m[1]);
    return r && r->goals == std::stoi(m[2]) && r->month == m[3] ? std::optional(Category::Descriptive) : std::nullopt;
  }
  return std::nullopt;
}

/// Every clause is true of the table and the clause categories are exactly
/// the instance's label set.
inline bool faithful(const retag::Instance& inst, std::string* why = nullptr) {
  const auto rows = parse_rows(inst.table);
  retag::CategorySet seen;
  for (const auto& clause : split_clauses(inst.reference)) {
    auto c = check_clause(clause, rows);
    if (!c) {
      if (why) *why = "unverifiable clause '" + clause + "'";
      return false;
    }
    seen.insert(*c);
  }
  if (!(seen == inst.categories)) {
    if (why) *why = "clauses cover " + seen.key() + " but label is " + inst.categories.key();
    return false;
  }
  return true;
}

}  // namespace oracle

namespace fixture {

inline retag::ModelConfig tiny_config(retag::Strategy s = retag::Strategy::ReTAG, int codebooks = 6, int vocab = 16) {
  retag::ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.hidden = 8;
  c.ffn = 16;
  c.vocab_size = vocab;
  c.max_len = 24;
  c.codebook_size = 4;
  c.strategy = s;
  c.codebook_count = codebooks;
  return c;
}

inline retag::Table small_table() {
  retag::Table t;
  t.id = "t1";
  t.title = "t";
  t.section_title = "s";
  t.headers = {"month", "goals"};
  t.rows = {{"june", "3"}, {"july", "5"}};
  return t;
}

/// (reference, table_text) over 100 tokens whose fuzzy ratio is exactly
/// `ratio`: 100 - ratio reference positions are replaced by a stopword, so no
/// novel content word appears. With `superlative`, one shared position holds
/// "largest".
inline std::pair<std::string, std::string> ratio_pair(int ratio, bool superlative) {
  std::vector<std::string> ref(100, "cat"), tab(100, "cat");
  if (superlative) ref[0] = tab[0] = "largest";
  for (int i = 0; i < 100 - ratio; ++i) ref[static_cast<std::size_t>(99 - i)] = "the";
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& w : v) s += (s.empty() ? "" : " ") + w;
    return s;
  };
  return {join(ref), join(tab)};
}

}  // namespace fixture
