#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "retag/errors.hpp"

namespace retag {

/// The six reasoning categories, in canonical order. Descriptive is last so
/// the five analytical categories occupy indices 0..4.
enum class Category : std::uint8_t { Tabular = 0, Numerical, Temporal, Commonsense, Entity, Descriptive };

inline constexpr std::size_t kNumCategories = 6;
inline constexpr std::size_t kNumAnalytical = 5;

inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::Tabular, Category::Numerical, Category::Temporal,
    Category::Commonsense, Category::Entity, Category::Descriptive};

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "tabular", "numerical", "temporal", "commonsense", "entity", "descriptive"};

inline std::string_view category_name(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

inline std::optional<Category> parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kNumCategories; ++i)
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  return std::nullopt;
}

/// Subset of the six categories as a bitmask (bit i = Category i).
class CategorySet {
 public:
  constexpr CategorySet() = default;
  constexpr explicit CategorySet(std::uint8_t bits) : bits_(bits & 0x3F) {}
  CategorySet(std::initializer_list<Category> cats) {
    for (auto c : cats) insert(c);
  }

  static CategorySet descriptive() { return {Category::Descriptive}; }

  void insert(Category c) { bits_ |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(c)); }
  bool contains(Category c) const { return bits_ & (1u << static_cast<unsigned>(c)); }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  std::uint8_t bits() const { return bits_; }

  bool is_descriptive() const { return contains(Category::Descriptive); }
  bool is_analytical() const { return !empty() && !is_descriptive(); }

  /// Non-empty, and descriptive only ever appears alone.
  bool valid() const { return !empty() && (!is_descriptive() || size() == 1); }

  std::vector<Category> members() const {
    std::vector<Category> out;
    for (auto c : kAllCategories)
      if (contains(c)) out.push_back(c);
    return out;
  }

  /// "numerical+temporal" style key, canonical order.
  std::string key() const {
    std::string out;
    for (auto c : members()) {
      if (!out.empty()) out += '+';
      out += category_name(c);
    }
    return out;
  }

  static CategorySet parse_key(std::string_view key, char sep = '+') {
    CategorySet s;
    std::size_t start = 0;
    while (start <= key.size()) {
      auto end = key.find(sep, start);
      if (end == std::string_view::npos) end = key.size();
      auto name = key.substr(start, end - start);
      auto c = parse_category(name);
      if (!c) throw DataError("unknown category '" + std::string(name) + "'");
      s.insert(*c);
      start = end + 1;
    }
    return s;
  }

  friend bool operator==(CategorySet a, CategorySet b) { return a.bits_ == b.bits_; }
  friend auto operator<=>(CategorySet a, CategorySet b) { return a.bits_ <=> b.bits_; }

 private:
  std::uint8_t bits_ = 0;
};

struct Table {
  std::string id;
  std::string title;
  std::string section_title;
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  void validate() const {
    if (headers.empty()) throw DataError("table " + id + ": no headers");
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (rows[r].size() != headers.size())
        throw DataError("table " + id + ": row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                        " cells, expected " + std::to_string(headers.size()));
  }
};

struct CellRef {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const CellRef&, const CellRef&) = default;
};

using HighlightSet = std::vector<CellRef>;

inline void validate_highlights(const Table& t, const HighlightSet& hl) {
  std::set<CellRef> seen;
  for (const auto& c : hl) {
    if (c.row >= t.rows.size() || c.col >= t.headers.size())
      throw DataError("table " + t.id + ": highlight (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                      ") outside " + std::to_string(t.rows.size()) + "x" + std::to_string(t.headers.size()) + " grid");
    if (!seen.insert(c).second)
      throw DataError("table " + t.id + ": duplicate highlight (" + std::to_string(c.row) + "," +
                      std::to_string(c.col) + ")");
  }
}

enum class Split : std::uint8_t { Train, Valid, Test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

struct Instance {
  Table table;
  HighlightSet highlights;
  std::string reference;
  CategorySet categories;
  Split split = Split::Train;

  bool analytical() const { return categories.is_analytical(); }

  void validate() const {
    table.validate();
    validate_highlights(table, highlights);
    if (reference.empty()) throw DataError("instance " + table.id + ": empty reference");
    if (!categories.valid())
      throw DataError("instance " + table.id + ": invalid category set '" + categories.key() + "'");
  }
};

// ---- JSONL ingestion / emission ------------------------------------------

inline nlohmann::json to_json(const Instance& inst) {
  nlohmann::json hl = nlohmann::json::array();
  for (const auto& c : inst.highlights) hl.push_back({c.row, c.col});
  nlohmann::json cats = nlohmann::json::array();
  for (auto c : inst.categories.members()) cats.push_back(category_name(c));
  return {{"id", inst.table.id},
          {"title", inst.table.title},
          {"section_title", inst.table.section_title},
          {"headers", inst.table.headers},
          {"rows", inst.table.rows},
          {"highlighted", hl},
          {"reference", inst.reference},
          {"categories", cats},
          {"split", split_name(inst.split)}};
}

inline Instance instance_from_json(const nlohmann::json& j) {
  try {
    Instance inst;
    inst.table.id = j.at("id").get<std::string>();
    inst.table.title = j.value("title", "");
    inst.table.section_title = j.value("section_title", "");
    inst.table.headers = j.at("headers").get<std::vector<std::string>>();
    inst.table.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    for (const auto& c : j.at("highlighted")) {
      if (!c.is_array() || c.size() != 2) throw DataError("highlight entries must be [row, col]");
      const auto r = c[0].get<long long>(), col = c[1].get<long long>();
      if (r < 0 || col < 0) throw DataError("negative highlight coordinate");
      inst.highlights.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(col)});
    }
    inst.reference = j.at("reference").get<std::string>();
    for (const auto& c : j.at("categories")) {
      auto cat = parse_category(c.get<std::string>());
      if (!cat) throw DataError("unknown category '" + c.get<std::string>() + "'");
      inst.categories.insert(*cat);
    }
    inst.split = parse_split(j.value("split", "train"));
    inst.validate();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed instance: ") + e.what());
  }
}

inline std::vector<Instance> read_instances_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<Instance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : records) out << r.dump() << '\n';
}

inline void write_instances_jsonl(const std::string& path, const std::vector<Instance>& instances) {
  std::vector<nlohmann::json> recs;
  recs.reserve(instances.size());
  for (const auto& i : instances) recs.push_back(to_json(i));
  write_jsonl(path, recs);
}

}  // namespace retag
