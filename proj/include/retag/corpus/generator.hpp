#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "retag/corpus/lexicon.hpp"
#include "retag/errors.hpp"
#include "retag/numerics/rng.hpp"
#include "retag/tables/table.hpp"

namespace retag {

struct IntRange {
  int lo = 0;
  int hi = 0;
  int width() const { return hi - lo + 1; }
};

/// Configuration of the synthetic reasoning-tagged corpus.
struct GeneratorSpec {
  std::vector<std::pair<CategorySet, double>> mix;
  IntRange rows{3, 4};
  IntRange goals{1, 40};
  IntRange temperature{-5, 35};
  IntRange founded{1900, 1980};
  IntRange duration{5, 40};
  std::uint64_t seed = 0;

  /// Descriptive 0.3, each analytical category alone 0.08, four pairs at
  /// 0.05 and two triples at 0.05.
  static GeneratorSpec defaults() {
    GeneratorSpec s;
    using C = Category;
    s.mix = {{CategorySet::descriptive(), 0.30},
             {{C::Tabular}, 0.08},
             {{C::Numerical}, 0.08},
             {{C::Temporal}, 0.08},
             {{C::Commonsense}, 0.08},
             {{C::Entity}, 0.08},
             {{C::Numerical, C::Temporal}, 0.05},
             {{C::Numerical, C::Commonsense}, 0.05},
             {{C::Temporal, C::Entity}, 0.05},
             {{C::Tabular, C::Numerical}, 0.05},
             {{C::Numerical, C::Temporal, C::Entity}, 0.05},
             {{C::Tabular, C::Numerical, C::Commonsense}, 0.05}};
    return s;
  }

  /// Same shape of mix restricted to analytical sets (pretraining surrogate).
  static GeneratorSpec analytical_only() {
    auto s = defaults();
    std::erase_if(s.mix, [](const auto& e) { return e.first.is_descriptive(); });
    double total = 0;
    for (auto& [_, p] : s.mix) total += p;
    for (auto& [_, p] : s.mix) p /= total;
    return s;
  }

  void validate() const {
    if (mix.empty()) throw ConfigError("generator: empty category mix");
    double total = 0;
    for (const auto& [set, p] : mix) {
      if (!set.valid())
        throw ConfigError("generator: impossible category set '" + set.key() + "' (descriptive must stand alone)");
      if (p < 0) throw ConfigError("generator: negative probability for '" + set.key() + "'");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("generator: mix probabilities sum to " + std::to_string(total));
    if (rows.lo < 2 || rows.hi < rows.lo || rows.hi > 12) throw ConfigError("generator: rows range must be within [2, 12]");
    if (goals.width() < rows.hi || goals.lo < 0) throw ConfigError("generator: goals range too narrow for distinct values");
    if (temperature.width() < rows.hi) throw ConfigError("generator: temperature range too narrow for distinct values");
    if (founded.width() < 1 || duration.lo < 1 || duration.width() < 1)
      throw ConfigError("generator: degenerate year ranges");
  }
};

inline nlohmann::json to_json(const GeneratorSpec& s) {
  nlohmann::json mix = nlohmann::json::object();
  for (const auto& [set, p] : s.mix) mix[set.key()] = p;
  auto range = [](IntRange r) { return nlohmann::json::array({r.lo, r.hi}); };
  return {{"mix", mix},
          {"rows", range(s.rows)},
          {"goals", range(s.goals)},
          {"temperature", range(s.temperature)},
          {"founded", range(s.founded)},
          {"duration", range(s.duration)},
          {"seed", s.seed}};
}

inline GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec s = GeneratorSpec::defaults();
  auto range = [](const nlohmann::json& v, const char* key) {
    if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("generator.") + key + " must be [lo, hi]");
    return IntRange{v[0].get<int>(), v[1].get<int>()};
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "mix") {
      s.mix.clear();
      for (auto m = it->begin(); m != it->end(); ++m) s.mix.emplace_back(CategorySet::parse_key(m.key()), m->get<double>());
      std::sort(s.mix.begin(), s.mix.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    } else if (k == "rows") {
      s.rows = range(*it, "rows");
    } else if (k == "goals") {
      s.goals = range(*it, "goals");
    } else if (k == "temperature") {
      s.temperature = range(*it, "temperature");
    } else if (k == "founded") {
      s.founded = range(*it, "founded");
    } else if (k == "duration") {
      s.duration = range(*it, "duration");
    } else if (k == "seed") {
      s.seed = it->get<std::uint64_t>();
    } else {
      throw ConfigError("generator: unknown key '" + k + "'");
    }
  }
  s.validate();
  return s;
}

namespace synth {

// Column layout of every synthetic table.
enum Column : std::size_t { kMonth = 0, kClub, kFounded, kDissolved, kGoals, kTemperature, kNumColumns };

inline const std::vector<std::string>& headers() {
  static const std::vector<std::string> h = {"month", "club", "founded", "dissolved", "goals", "temperature"};
  return h;
}

struct Row {
  int month;
  int club;
  int founded;
  int dissolved;
  int goals;
  int temperature;
};

struct Clause {
  std::string text;
  HighlightSet cells;
};

inline std::vector<int> distinct_values(Rng& rng, IntRange r, int n) {
  std::vector<int> pool(static_cast<std::size_t>(r.width()));
  std::iota(pool.begin(), pool.end(), r.lo);
  rng.shuffle(std::span<int>(pool));
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

inline std::size_t pick(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
}

inline std::vector<CellRef> column_cells(std::size_t rows, Column c) {
  std::vector<CellRef> out;
  for (std::size_t r = 0; r < rows; ++r) out.push_back({r, c});
  return out;
}

inline std::string club(const Row& r) { return lexicon::club_name(static_cast<std::size_t>(r.club)); }
inline std::string month(const Row& r) { return std::string(lexicon::kMonths[static_cast<std::size_t>(r.month)]); }

inline Clause make_clause(Category cat, const std::vector<Row>& rows, Rng& rng) {
  const std::size_t n = rows.size();
  switch (cat) {
    case Category::Tabular: {
      const std::size_t r = pick(rng, n);
      int k = 0;
      for (const auto& other : rows) k += other.goals > rows[r].goals;
      return {std::to_string(k) + " of the " + std::to_string(n) + " clubs scored more goals than " + club(rows[r]),
              {{r, kClub}, {r, kGoals}}};
    }
    case Category::Numerical: {
      const auto op = pick(rng, 4);
      if (op == 3) {
        std::size_t a = pick(rng, n), b = pick(rng, n - 1);
        if (b >= a) ++b;
        if (rows[a].goals < rows[b].goals) std::swap(a, b);
        return {club(rows[a]) + " scored " + std::to_string(rows[a].goals - rows[b].goals) + " more goals than " +
                    club(rows[b]),
                {{a, kClub}, {a, kGoals}, {b, kClub}, {b, kGoals}}};
      }
      const auto cells = column_cells(n, kGoals);
      if (op == 2) {
        int total = 0;
        for (const auto& r : rows) total += r.goals;
        return {"the clubs scored " + std::to_string(total) + " goals in total", cells};
      }
      auto cmp = [](const Row& x, const Row& y) { return x.goals < y.goals; };
      const auto& best = op == 0 ? *std::max_element(rows.begin(), rows.end(), cmp)
                                 : *std::min_element(rows.begin(), rows.end(), cmp);
      return {std::string(op == 0 ? "the highest" : "the lowest") + " number of goals was " + std::to_string(best.goals),
              cells};
    }
    case Category::Temporal: {
      const std::size_t r = pick(rng, n);
      return {club(rows[r]) + " was active for " + std::to_string(rows[r].dissolved - rows[r].founded) + " years",
              {{r, kClub}, {r, kFounded}, {r, kDissolved}}};
    }
    case Category::Commonsense: {
      const bool warm = pick(rng, 2) == 0;
      auto cmp = [](const Row& x, const Row& y) { return x.temperature < y.temperature; };
      const auto& best = warm ? *std::max_element(rows.begin(), rows.end(), cmp)
                              : *std::min_element(rows.begin(), rows.end(), cmp);
      auto cells = column_cells(n, kMonth);
      for (auto c : column_cells(n, kTemperature)) cells.push_back(c);
      return {month(best) + " was the " + (warm ? "warmest" : "coolest") + " month", cells};
    }
    case Category::Entity: {
      const std::size_t r = pick(rng, n);
      return {lexicon::club_alias(static_cast<std::size_t>(rows[r].club)) + " played in " + month(rows[r]),
              {{r, kClub}, {r, kMonth}}};
    }
    case Category::Descriptive: {
      const std::size_t r = pick(rng, n);
      return {club(rows[r]) + " scored " + std::to_string(rows[r].goals) + " goals in " + month(rows[r]),
              {{r, kMonth}, {r, kClub}, {r, kGoals}}};
    }
  }
  throw ContractError("unreachable category");
}

}  // namespace synth

/// Seeded generator object; not to be shared across threads (use split
/// streams per shard instead).
class SyntheticCorpus {
 public:
  explicit SyntheticCorpus(GeneratorSpec spec) : spec_(std::move(spec)), rng_(spec_.seed, "data") { spec_.validate(); }

  Instance next() {
    using namespace synth;
    const CategorySet cats = sample_set();
    const int n = static_cast<int>(rng_.uniform_int(spec_.rows.lo, spec_.rows.hi));
    auto months = distinct_values(rng_, {0, 11}, n);
    std::sort(months.begin(), months.end());
    const auto clubs = distinct_values(rng_, {0, static_cast<int>(lexicon::kClubCount) - 1}, n);
    const auto goals = distinct_values(rng_, spec_.goals, n);
    const auto temps = distinct_values(rng_, spec_.temperature, n);
    std::vector<Row> rows;
    for (int i = 0; i < n; ++i) {
      const int start = static_cast<int>(rng_.uniform_int(spec_.founded.lo, spec_.founded.hi));
      const int dur = static_cast<int>(rng_.uniform_int(spec_.duration.lo, spec_.duration.hi));
      rows.push_back({months[i], clubs[i], start, start + dur, goals[i], temps[i]});
    }

    Instance inst;
    inst.table.id = "synth-" + std::to_string(spec_.seed) + "-" + std::to_string(index_++);
    inst.table.title = std::string(lexicon::kPlaces[pick(rng_, lexicon::kPlaces.size())]) + " league";
    inst.table.section_title = "season " + std::to_string(rng_.uniform_int(1990, 2020));
    inst.table.headers = headers();
    for (const auto& r : rows)
      inst.table.rows.push_back({month(r), club(r), std::to_string(r.founded), std::to_string(r.dissolved),
                                 std::to_string(r.goals), std::to_string(r.temperature)});

    std::string text;
    std::set<CellRef> cells;
    for (auto c : cats.members()) {
      auto clause = make_clause(c, rows, rng_);
      if (!text.empty()) text += " and ";
      text += clause.text;
      cells.insert(clause.cells.begin(), clause.cells.end());
    }
    inst.reference = text + " .";
    inst.highlights.assign(cells.begin(), cells.end());
    inst.categories = cats;
    return inst;
  }

  std::vector<Instance> generate(std::size_t n) {
    if (n == 0) throw ContractError("synth_generate: n must be positive");
    std::vector<Instance> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

 private:
  CategorySet sample_set() {
    const double u = rng_.uniform();
    double acc = 0;
    for (const auto& [set, p] : spec_.mix) {
      acc += p;
      if (u < acc) return set;
    }
    return spec_.mix.back().first;
  }

  GeneratorSpec spec_;
  Rng rng_;
  std::size_t index_ = 0;
};

inline std::vector<Instance> synth_generate(const GeneratorSpec& spec, std::size_t n) {
  return SyntheticCorpus(spec).generate(n);
}

}  // namespace retag
