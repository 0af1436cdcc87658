#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphinfo/errors.hpp"
#include "morphinfo/utf8.hpp"

namespace morphinfo {

enum class Gender { kMasculine = 0, kFeminine = 1 };
enum class Etymology { kSemitic = 0, kNonSemitic = 1 };
enum class ConcatType { kAffixal = 0, kTemplatic = 1 };

// Where an allomorph comes from; rows of the etymology cross-tabulation.
enum class AllomorphOrigin { kNonSemiticAffix = 0, kSemiticAffix = 1, kSemiticTemplate = 2 };

inline constexpr std::size_t kNumGenders = 2;

inline std::string_view to_string(Gender g) { return g == Gender::kMasculine ? "m" : "f"; }
inline std::string_view to_string(Etymology e) {
  return e == Etymology::kSemitic ? "semitic" : "non-semitic";
}
inline std::string_view to_string(ConcatType t) {
  return t == ConcatType::kAffixal ? "affixal" : "templatic";
}
inline std::string_view to_string(AllomorphOrigin o) {
  switch (o) {
    case AllomorphOrigin::kNonSemiticAffix: return "non-semitic-affix";
    case AllomorphOrigin::kSemiticAffix: return "semitic-affix";
    case AllomorphOrigin::kSemiticTemplate: return "semitic-template";
  }
  return "";
}

inline std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "m" || s == "masculine" || s == "M") return Gender::kMasculine;
  if (s == "f" || s == "feminine" || s == "F") return Gender::kFeminine;
  return std::nullopt;
}
inline std::optional<Etymology> parse_etymology(std::string_view s) {
  if (s == "semitic" || s == "Semitic" || s == "S") return Etymology::kSemitic;
  if (s == "non-semitic" || s == "non_semitic" || s == "nonsemitic" || s == "Non-Semitic" ||
      s == "NS") {
    return Etymology::kNonSemitic;
  }
  return std::nullopt;
}
inline std::optional<ConcatType> parse_concat_type(std::string_view s) {
  if (s == "affixal") return ConcatType::kAffixal;
  if (s == "templatic") return ConcatType::kTemplatic;
  return std::nullopt;
}

struct AllomorphInfo {
  std::string_view label;
  ConcatType concat_type;
  AllomorphOrigin origin;
};

// Static inventory of Maltese plural allomorphs: 13 sound-plural suffixes and
// 11 broken-plural CV templates. The Romance/English suffixes -i and -s are
// the non-Semitic affixes; every other suffix is Semitic.
inline constexpr std::array<AllomorphInfo, 24> kAllomorphInventory{{
    {"-i", ConcatType::kAffixal, AllomorphOrigin::kNonSemiticAffix},
    {"-s", ConcatType::kAffixal, AllomorphOrigin::kNonSemiticAffix},
    {"-ijiet", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-iet", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-a", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-in", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-at", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-ien", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-n", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-jin", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-ejn", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-ajn", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"-an", ConcatType::kAffixal, AllomorphOrigin::kSemiticAffix},
    {"CCVVCVC", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"(C)CVCVC", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"CCVVC", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"CCVjjVC", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"CCVVCV", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"VCCCV", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"CVCCV", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"(għ)VCVC", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"VCVC", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"CVCCVVC(V)", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
    {"(għ)VCCV", ConcatType::kTemplatic, AllomorphOrigin::kSemiticTemplate},
}};

inline const AllomorphInfo* find_allomorph(std::string_view label) {
  for (const auto& info : kAllomorphInventory) {
    if (info.label == label) return &info;
  }
  return nullptr;
}

struct LexicalEntry {
  std::string lexeme_id;
  std::string singular_form;
  std::string plural_form;
  Gender gender;
  Etymology etymology;
  std::string allomorph_class;
  ConcatType concat_type;

  bool operator==(const LexicalEntry&) const = default;
};

// Lexemes carry no explicit id in the TSV; the (singular, gender, etymology)
// triple identifies them.
inline std::string make_lexeme_id(std::string_view singular, Gender g, Etymology e) {
  std::string id(singular);
  id += '|';
  id += to_string(g);
  id += '|';
  id += to_string(e);
  return id;
}

struct Lexicon {
  std::vector<LexicalEntry> entries;
  std::set<std::string> alphabet;

  bool operator==(const Lexicon&) const = default;

  std::size_t lexeme_count() const {
    std::set<std::string_view> ids;
    for (const auto& e : entries) ids.insert(e.lexeme_id);
    return ids.size();
  }

  void recompute_alphabet() {
    alphabet.clear();
    for (const auto& e : entries) {
      for (auto& s : utf8::split_codepoints(e.singular_form)) alphabet.insert(std::move(s));
    }
  }
};

inline constexpr std::array<std::string_view, 6> kLexiconColumns{
    "singular", "plural", "gender", "etymology", "allomorph", "type"};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

// Reads the tab-separated lexicon. The header must name the six columns in
// order; blank lines are ignored. Throws a ValidationError subclass with the
// offending line number on the first bad row.
inline Lexicon parse_lexicon(std::istream& in) {
  Lexicon lexicon;
  std::string raw;
  std::size_t line_no = 0;

  bool have_header = false;
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::strip_cr(raw);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (!have_header) {
      const auto fields = detail::split_tabs(line);
      if (fields.size() != kLexiconColumns.size() ||
          !std::equal(fields.begin(), fields.end(), kLexiconColumns.begin())) {
        throw MalformedRow("header must be: singular, plural, gender, etymology, allomorph, type",
                           line_no);
      }
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    if (!utf8::is_valid(line)) throw MalformedRow("row is not valid UTF-8", line_no);

    const auto f = detail::split_tabs(line);
    if (f.size() != kLexiconColumns.size()) {
      throw MalformedRow("expected 6 tab-separated columns, found " + std::to_string(f.size()),
                         line_no);
    }
    if (f[0].empty()) throw EmptyForm("empty singular form", line_no);
    if (f[1].empty()) throw EmptyForm("empty plural form", line_no);
    const auto gender = parse_gender(f[2]);
    if (!gender) throw UnknownLabel("unknown gender '" + std::string(f[2]) + "'", line_no);
    const auto etym = parse_etymology(f[3]);
    if (!etym) throw UnknownLabel("unknown etymology '" + std::string(f[3]) + "'", line_no);
    const auto* info = find_allomorph(f[4]);
    if (info == nullptr) {
      throw UnknownLabel("unknown allomorph '" + std::string(f[4]) + "'", line_no);
    }
    const auto type = parse_concat_type(f[5]);
    if (!type) throw UnknownLabel("unknown type '" + std::string(f[5]) + "'", line_no);
    if (*type != info->concat_type) {
      throw UnknownLabel("allomorph '" + std::string(f[4]) + "' is " +
                             std::string(to_string(info->concat_type)) + ", row says " +
                             std::string(f[5]),
                         line_no);
    }

    auto lexeme_id = make_lexeme_id(f[0], *gender, *etym);
    if (!seen.emplace(lexeme_id, std::string(f[1])).second) {
      throw DuplicatePair("duplicate (lexeme, plural) pair: " + std::string(f[0]) + " -> " +
                              std::string(f[1]),
                          line_no);
    }
    LexicalEntry entry{std::move(lexeme_id),
                       std::string(f[0]),
                       std::string(f[1]),
                       *gender,
                       *etym,
                       std::string(f[4]),
                       *type};
    lexicon.entries.push_back(std::move(entry));
  }
  if (!have_header) throw MalformedRow("missing header row", 0);

  lexicon.recompute_alphabet();
  return lexicon;
}

inline Lexicon parse_lexicon(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_lexicon(in);
}

// Canonical TSV serialization; parse_lexicon(write_lexicon(x)) == x.
inline void write_lexicon(std::ostream& out, const Lexicon& lexicon) {
  for (std::size_t i = 0; i < kLexiconColumns.size(); ++i) {
    out << (i ? "\t" : "") << kLexiconColumns[i];
  }
  out << '\n';
  for (const auto& e : lexicon.entries) {
    out << e.singular_form << '\t' << e.plural_form << '\t' << to_string(e.gender) << '\t'
        << to_string(e.etymology) << '\t' << e.allomorph_class << '\t' << to_string(e.concat_type)
        << '\n';
  }
}

inline std::string write_lexicon(const Lexicon& lexicon) {
  std::ostringstream out;
  write_lexicon(out, lexicon);
  return out.str();
}

// Drops every entry whose allomorph class is attested for fewer than
// `min_count` distinct lexemes.
inline Lexicon prune_classes(const Lexicon& lexicon, std::size_t min_count) {
  if (min_count == 0) throw Error("min_count must be >= 1");
  std::map<std::string_view, std::set<std::string_view>> lexemes_by_class;
  for (const auto& e : lexicon.entries) lexemes_by_class[e.allomorph_class].insert(e.lexeme_id);

  Lexicon out;
  for (const auto& e : lexicon.entries) {
    if (lexemes_by_class[e.allomorph_class].size() >= min_count) out.entries.push_back(e);
  }
  out.recompute_alphabet();
  return out;
}

enum class Task { kAllomorph, kType, kEtymology };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::kAllomorph: return "allomorph";
    case Task::kType: return "type";
    case Task::kEtymology: return "etymology";
  }
  return "";
}
inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "allomorph") return Task::kAllomorph;
  if (s == "type") return Task::kType;
  if (s == "etymology" || s == "etymology_target") return Task::kEtymology;
  return std::nullopt;
}

struct Instance {
  std::string lexeme_id;
  std::vector<std::string> form_symbols;
  Gender gender;
  Etymology etymology;
  std::size_t label;  // index into InstanceSet::label_space

  bool operator==(const Instance&) const = default;
};

struct InstanceSet {
  Task task = Task::kAllomorph;
  std::vector<Instance> instances;
  std::vector<std::string> label_space;  // sorted

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }

  std::vector<std::size_t> label_counts() const {
    std::vector<std::size_t> counts(label_space.size(), 0);
    for (const auto& inst : instances) ++counts[inst.label];
    return counts;
  }

  InstanceSet subset(const std::vector<std::size_t>& indices) const {
    InstanceSet out{task, {}, label_space};
    out.instances.reserve(indices.size());
    for (auto i : indices) out.instances.push_back(instances[i]);
    return out;
  }
};

// Expands the lexicon into classification instances:
//   allomorph: one per (lexeme, plural) row,
//   type:      one per (lexeme, concatenative type),
//   etymology: one per lexeme, labelled with its etymology.
// Instances keep first-occurrence order.
inline InstanceSet build_instances(const Lexicon& lexicon, Task task) {
  auto label_of = [task](const LexicalEntry& e) -> std::string {
    switch (task) {
      case Task::kAllomorph: return e.allomorph_class;
      case Task::kType: return std::string(to_string(e.concat_type));
      case Task::kEtymology: return std::string(to_string(e.etymology));
    }
    return {};
  };

  std::vector<const LexicalEntry*> kept;
  std::set<std::pair<std::string_view, std::string>> seen;
  for (const auto& e : lexicon.entries) {
    switch (task) {
      case Task::kAllomorph:
        kept.push_back(&e);
        break;
      case Task::kType:
        if (seen.emplace(e.lexeme_id, std::string(to_string(e.concat_type))).second) {
          kept.push_back(&e);
        }
        break;
      case Task::kEtymology:
        if (seen.emplace(e.lexeme_id, std::string()).second) kept.push_back(&e);
        break;
    }
  }

  std::set<std::string> labels;
  for (const auto* e : kept) labels.insert(label_of(*e));

  InstanceSet out;
  out.task = task;
  out.label_space.assign(labels.begin(), labels.end());
  out.instances.reserve(kept.size());
  for (const auto* e : kept) {
    const auto label = label_of(*e);
    const auto idx = static_cast<std::size_t>(
        std::lower_bound(out.label_space.begin(), out.label_space.end(), label) -
        out.label_space.begin());
    out.instances.push_back(
        {e->lexeme_id, utf8::split_codepoints(e->singular_form), e->gender, e->etymology, idx});
  }
  return out;
}

// Allomorph counts cross-tabulated by allomorph origin (rows) and lexeme
// etymology (columns). Lexemes with several plurals count once per plural.
struct DistributionTable {
  // counts[origin][etymology column]; column 0 = non-Semitic lexeme,
  // column 1 = Semitic lexeme.
  std::array<std::array<std::size_t, 2>, 3> counts{};

  static constexpr std::size_t kNonSemiticColumn = 0;
  static constexpr std::size_t kSemiticColumn = 1;

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& row : counts) t += row[0] + row[1];
    return t;
  }
  std::size_t row_total(std::size_t r) const { return counts[r][0] + counts[r][1]; }
  std::size_t column_total(std::size_t c) const {
    return counts[0][c] + counts[1][c] + counts[2][c];
  }
  double row_percent(std::size_t r) const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(row_total(r)) / total();
  }
  double column_percent(std::size_t c) const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(column_total(c)) / total();
  }
  std::size_t at(AllomorphOrigin origin, Etymology lexeme) const {
    return counts[static_cast<std::size_t>(origin)]
                 [lexeme == Etymology::kNonSemitic ? kNonSemiticColumn : kSemiticColumn];
  }
};

inline DistributionTable distribution_table(const Lexicon& lexicon) {
  DistributionTable table;
  for (const auto& e : lexicon.entries) {
    const auto* info = find_allomorph(e.allomorph_class);
    if (info == nullptr) throw MissingOriginAnnotation(e.allomorph_class);
    const std::size_t col = e.etymology == Etymology::kNonSemitic
                                ? DistributionTable::kNonSemiticColumn
                                : DistributionTable::kSemiticColumn;
    ++table.counts[static_cast<std::size_t>(info->origin)][col];
  }
  return table;
}

inline nlohmann::json to_json(const DistributionTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < 3; ++r) {
    rows.push_back({{"origin", to_string(static_cast<AllomorphOrigin>(r))},
                    {"non_semitic_lexeme", t.counts[r][0]},
                    {"semitic_lexeme", t.counts[r][1]},
                    {"total", t.row_total(r)},
                    {"percent", t.row_percent(r)}});
  }
  return {{"rows", rows},
          {"column_totals",
           {{"non_semitic_lexeme", t.column_total(0)}, {"semitic_lexeme", t.column_total(1)}}},
          {"column_percent",
           {{"non_semitic_lexeme", t.column_percent(0)}, {"semitic_lexeme", t.column_percent(1)}}},
          {"total", t.total()}};
}

inline std::string to_csv(const DistributionTable& t) {
  std::ostringstream out;
  out.precision(17);
  out << "origin,non_semitic_lexeme,semitic_lexeme,total,percent\n";
  for (std::size_t r = 0; r < 3; ++r) {
    out << to_string(static_cast<AllomorphOrigin>(r)) << ',' << t.counts[r][0] << ','
        << t.counts[r][1] << ',' << t.row_total(r) << ',' << t.row_percent(r) << '\n';
  }
  out << "total," << t.column_total(0) << ',' << t.column_total(1) << ',' << t.total() << ",100\n";
  out << "percent," << t.column_percent(0) << ',' << t.column_percent(1) << ",100,\n";
  return out.str();
}

}  // namespace morphinfo
