#pragma once

#include <array>
#include <string>
#include <string_view>

#include "retag/tables/table.hpp"

namespace retag {

enum class Strategy : std::uint8_t { NoTags, Tags, ReTAG };

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::NoTags: return "notags";
    case Strategy::Tags: return "tags";
    case Strategy::ReTAG: return "retag";
  }
  return "retag";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "notags") return Strategy::NoTags;
  if (s == "tags") return Strategy::Tags;
  if (s == "retag") return Strategy::ReTAG;
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected notags, tags or retag)");
}

// Atoms of the linearization grammar; any occurrence inside table text is
// escaped with a leading backslash so the rendering stays unambiguous.
inline constexpr std::array<std::string_view, 7> kReservedAtoms = {"TITLE :", "SECTION :", "HEAD :", "ROW",
                                                                   "</hl>",   "<hl>",      "|"};

inline std::string escape_reserved(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    bool hit = false;
    for (auto atom : kReservedAtoms) {
      if (text.substr(i, atom.size()) == atom) {
        out += '\\';
        out += atom;
        i += atom.size();
        hit = true;
        break;
      }
    }
    if (!hit) out += text[i++];
  }
  return out;
}

/// Renders
///   TITLE : <title> SECTION : <section> HEAD : h1 | h2 ROW 1 : c11 | c12 ...
/// with highlighted data cells wrapped as `<hl> value </hl>`.
inline std::string linearize(const Table& table, const HighlightSet& highlights) {
  table.validate();
  validate_highlights(table, highlights);
  std::vector<std::vector<bool>> marked(table.rows.size(), std::vector<bool>(table.headers.size(), false));
  for (const auto& c : highlights) marked[c.row][c.col] = true;

  std::string out = "TITLE : " + escape_reserved(table.title) + " SECTION : " + escape_reserved(table.section_title) +
                    " HEAD :";
  for (std::size_t j = 0; j < table.headers.size(); ++j) {
    out += j ? " | " : " ";
    out += escape_reserved(table.headers[j]);
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out += " ROW " + std::to_string(r + 1) + " :";
    for (std::size_t j = 0; j < table.headers.size(); ++j) {
      out += j ? " | " : " ";
      const auto cell = escape_reserved(table.rows[r][j]);
      out += marked[r][j] ? "<hl> " + cell + " </hl>" : cell;
    }
  }
  return out;
}

/// Tagged question for the Tags/ReTAG strategies; NoTags ignores categories.
inline std::string build_question(Strategy strategy, CategorySet categories) {
  if (!categories.valid()) throw DataError("build_question: invalid category set '" + categories.key() + "'");
  if (strategy == Strategy::NoTags) return "Generate a sentence based on the following table?";
  if (categories.is_descriptive()) return "Generate a descriptive sentence based on the following table?";
  std::string list;
  for (auto c : categories.members()) {
    if (!list.empty()) list += ", ";
    list += category_name(c);
  }
  return "Generate a sentence with " + list + " reasoning based on the following table?";
}

inline std::string build_input(std::string_view question, std::string_view linearized) {
  if (question.empty() || linearized.empty()) throw ContractError("build_input: empty question or table");
  std::string out;
  out.reserve(question.size() + 1 + linearized.size());
  out += question;
  out += ' ';
  out += linearized;
  return out;
}

}  // namespace retag
