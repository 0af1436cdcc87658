#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "morphinfo/lexicon.hpp"
#include "morphinfo/rng.hpp"
#include "morphinfo/utf8.hpp"

// Seeded synthetic data: a small Maltese-shaped lexicon and controlled
// classification tasks with known structure.
namespace morphinfo::synthetic {

// Seed of the bundled fixture data/maltese_shaped_fixture.tsv.
inline constexpr std::uint64_t kFixtureSeed = 1729;
inline constexpr std::size_t kFixtureEntries = 300;

namespace detail {

struct ClassWeight {
  std::string_view label;
  double weight;
};

// A family of singular shapes and the plural allomorphs it tends to take.
struct Pattern {
  Etymology etymology;
  double share;            // share of lexemes within its etymology
  double feminine_rate;
  int kind;                // which shape generator to use
  std::vector<ClassWeight> classes;
};

inline const std::vector<Pattern>& patterns() {
  static const std::vector<Pattern> p{
      // Romance nouns ending in -a ("karta").
      {Etymology::kNonSemitic, 0.45, 0.9, 0,
       {{"-i", 0.72}, {"-iet", 0.14}, {"-s", 0.06}, {"(C)CVCVC", 0.05}, {"-an", 0.03}}},
      // Romance nouns ending in -u / -i / -e / -ment.
      {Etymology::kNonSemitic, 0.35, 0.15, 1,
       {{"-i", 0.55}, {"-ijiet", 0.33}, {"-s", 0.09}, {"-ien", 0.03}}},
      // English loans ending in a consonant.
      {Etymology::kNonSemitic, 0.20, 0.1, 2,
       {{"-s", 0.68}, {"-ijiet", 0.27}, {"-i", 0.05}}},
      // Semitic feminines CVCCa ("libsa"); same surface ending as pattern 0.
      {Etymology::kSemitic, 0.45, 0.95, 3,
       {{"-iet", 0.45}, {"CCVVC", 0.22}, {"CCVVCV", 0.18}, {"-at", 0.12}, {"VCVC", 0.03}}},
      // Semitic CCVC / CVCVC nouns ("kbir", "marid").
      {Etymology::kSemitic, 0.35, 0.2, 4,
       {{"CCVVC", 0.48}, {"CCVVCVC", 0.22}, {"-ijiet", 0.15}, {"-in", 0.12}, {"-an", 0.03}}},
      // Semitic agent nouns CVCCieC ("giddieb").
      {Etymology::kSemitic, 0.20, 0.1, 5,
       {{"-a", 0.55}, {"-in", 0.35}, {"CCVVCVC", 0.10}}},
  };
  return p;
}

inline const std::string& pick(Rng& rng, const std::vector<std::string>& items) {
  return items[rng.below(items.size())];
}

inline std::string make_singular(Rng& rng, int kind) {
  static const std::vector<std::string> romance_c{"p", "t", "k", "b", "d", "l", "r", "m",
                                                  "n", "s", "v", "f", "ġ", "ċ", "z", "st", "pr", "tr"};
  static const std::vector<std::string> romance_v{"a", "e", "i", "o", "u"};
  static const std::vector<std::string> english_end{"er", "ing", "ott", "ejl", "ox", "ank", "ul"};
  static const std::vector<std::string> semitic_c{"q", "għ", "ħ", "x", "ż", "k", "t", "b",
                                                  "d", "r", "l", "m", "n", "s", "f", "ġ"};
  static const std::vector<std::string> semitic_v{"a", "i", "e", "o", "ie"};

  std::string s;
  switch (kind) {
    case 0: {
      const auto syl = 1 + rng.below(2);
      for (std::size_t i = 0; i < syl; ++i) s += pick(rng, romance_c) + pick(rng, romance_v);
      s += pick(rng, romance_c) + "a";
      break;
    }
    case 1: {
      const auto syl = 1 + rng.below(2);
      for (std::size_t i = 0; i < syl; ++i) s += pick(rng, romance_c) + pick(rng, romance_v);
      static const std::vector<std::string> ends{"u", "i", "e", "ment", "jun"};
      s += pick(rng, romance_c) + pick(rng, ends);
      break;
    }
    case 2:
      s = pick(rng, romance_c) + pick(rng, romance_v) + pick(rng, romance_c) + pick(rng, english_end);
      break;
    case 3:
      s = pick(rng, semitic_c) + pick(rng, semitic_v) + pick(rng, semitic_c) + pick(rng, semitic_c) + "a";
      break;
    case 4:
      if (rng.below(2) == 0) {
        s = pick(rng, semitic_c) + pick(rng, semitic_c) + pick(rng, semitic_v) + pick(rng, semitic_c);
      } else {
        s = pick(rng, semitic_c) + "a" + pick(rng, semitic_c) + "i" + pick(rng, semitic_c);
      }
      break;
    default:
      s = pick(rng, semitic_c) + "i" + pick(rng, semitic_c) + pick(rng, semitic_c) + "ie" +
          pick(rng, semitic_c);
      break;
  }
  return s;
}

inline bool is_vowel(const std::string& s) {
  return s == "a" || s == "e" || s == "i" || s == "o" || s == "u" || s == "à" || s == "ie";
}

inline std::string make_plural(const std::string& singular, std::string_view allomorph) {
  auto symbols = utf8::split_codepoints(singular);
  if (allomorph.starts_with("-")) {
    std::string suffix(allomorph.substr(1));
    if (!symbols.empty() && is_vowel(symbols.back()) && !suffix.empty() && is_vowel(std::string(1, suffix[0]))) {
      symbols.pop_back();
    }
    std::string out;
    for (const auto& s : symbols) out += s;
    return out + suffix;
  }
  // Fill the CV template with the singular's consonants in order.
  std::vector<std::string> consonants;
  for (const auto& s : symbols) {
    if (!is_vowel(s)) consonants.push_back(s);
  }
  if (consonants.empty()) consonants.push_back("m");
  std::string out;
  std::size_t next = 0;
  bool prev_vowel = false;
  for (char c : allomorph) {
    if (c == 'C') {
      out += consonants[next++ % consonants.size()];
      prev_vowel = false;
    } else if (c == 'V') {
      out += prev_vowel ? "e" : "i";
      prev_vowel = true;
    } else if (c == 'j') {
      out += "j";
      prev_vowel = false;
    }
  }
  return out;
}

inline std::string_view draw_class(Rng& rng, const std::vector<ClassWeight>& classes,
                                   std::string_view exclude = {}) {
  double total = 0.0;
  for (const auto& c : classes) {
    if (c.label != exclude) total += c.weight;
  }
  double u = rng.uniform() * total;
  for (const auto& c : classes) {
    if (c.label == exclude) continue;
    if (u < c.weight) return c.label;
    u -= c.weight;
  }
  for (auto it = classes.rbegin(); it != classes.rend(); ++it) {
    if (it->label != exclude) return it->label;
  }
  return classes.back().label;
}

}  // namespace detail

// Lexicon whose allomorph distribution depends on singular shape and, for
// shapes shared across etymologies, on etymology. About 8% of lexemes get a
// second plural.
inline Lexicon maltese_shaped_lexicon(std::uint64_t seed = kFixtureSeed,
                                      std::size_t entries = kFixtureEntries) {
  Rng rng(seed);
  const auto& pats = detail::patterns();
  Lexicon lex;
  std::set<std::string> ids;
  while (lex.entries.size() < entries) {
    const Etymology etym = rng.uniform() < 0.62 ? Etymology::kNonSemitic : Etymology::kSemitic;
    double u = rng.uniform();
    const detail::Pattern* pat = nullptr;
    for (const auto& p : pats) {
      if (p.etymology != etym) continue;
      pat = &p;
      if (u < p.share) break;
      u -= p.share;
    }
    const Gender gender = rng.uniform() < pat->feminine_rate ? Gender::kFeminine : Gender::kMasculine;
    std::string singular = detail::make_singular(rng, pat->kind);
    auto id = make_lexeme_id(singular, gender, etym);
    if (!ids.insert(id).second) continue;

    auto add = [&](std::string_view allomorph, const std::string& plural) {
      const auto* info = find_allomorph(allomorph);
      lex.entries.push_back({id, singular, plural, gender, etym, std::string(allomorph),
                             info->concat_type});
    };
    const auto first = detail::draw_class(rng, pat->classes);
    const auto first_plural = detail::make_plural(singular, first);
    add(first, first_plural);
    if (lex.entries.size() < entries && rng.uniform() < 0.08) {
      const auto second = detail::draw_class(rng, pat->classes, first);
      auto plural = detail::make_plural(singular, second);
      if (plural == first_plural) plural += "i";
      add(second, plural);
    }
  }
  lex.recompute_alphabet();
  return lex;
}

inline const std::array<std::string, 16>& synthetic_alphabet() {
  static const std::array<std::string, 16> a{"a", "b", "d", "e", "f", "g", "i", "k",
                                             "l", "m", "n", "o", "r", "s", "t", "u"};
  return a;
}

// Label = (alphabet position of the final symbol) mod `classes`; the mapping
// is deterministic, so a model that reads the last symbol is perfect.
inline InstanceSet last_symbol_task(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  const auto& alpha = synthetic_alphabet();
  InstanceSet set;
  set.task = Task::kAllomorph;
  for (std::size_t c = 0; c < classes; ++c) set.label_space.push_back("class" + std::to_string(c));
  std::sort(set.label_space.begin(), set.label_space.end());
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.lexeme_id = "w" + std::to_string(i);
    const auto len = 3 + rng.below(5);
    std::size_t last = 0;
    for (std::size_t t = 0; t < len; ++t) {
      last = rng.below(alpha.size());
      inst.form_symbols.push_back(alpha[last]);
    }
    inst.gender = rng.below(2) ? Gender::kFeminine : Gender::kMasculine;
    inst.etymology = rng.below(2) ? Etymology::kSemitic : Etymology::kNonSemitic;
    const auto name = "class" + std::to_string(last % classes);
    inst.label = static_cast<std::size_t>(
        std::find(set.label_space.begin(), set.label_space.end(), name) - set.label_space.begin());
    set.instances.push_back(std::move(inst));
  }
  return set;
}

// Copy of `set` with labels permuted uniformly at random across instances,
// which destroys any form-label dependence but keeps the label marginal.
inline InstanceSet shuffle_labels(const InstanceSet& set, std::uint64_t seed) {
  std::vector<std::size_t> labels;
  for (const auto& inst : set.instances) labels.push_back(inst.label);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(labels));
  auto out = set;
  for (std::size_t i = 0; i < out.size(); ++i) out.instances[i].label = labels[i];
  return out;
}

struct ClosedVocabulary {
  InstanceSet set;
  // Generating distribution q*(c | form) per form, and the forms.
  std::vector<std::vector<std::string>> forms;
  std::vector<Gender> genders;
  std::vector<std::vector<double>> class_probs;
};

// `forms` distinct words, each with a fixed gender and its own class
// distribution; each word appears `per_form` times with labels drawn from it.
inline ClosedVocabulary closed_vocabulary_task(std::size_t forms, std::size_t per_form,
                                               std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  const auto& alpha = synthetic_alphabet();
  ClosedVocabulary cv;
  cv.set.task = Task::kAllomorph;
  for (std::size_t c = 0; c < classes; ++c) cv.set.label_space.push_back("class" + std::to_string(c));

  std::set<std::vector<std::string>> seen;
  while (cv.forms.size() < forms) {
    std::vector<std::string> w;
    const auto len = 3 + rng.below(3);
    for (std::size_t t = 0; t < len; ++t) w.push_back(alpha[rng.below(alpha.size())]);
    if (!seen.insert(w).second) continue;
    cv.forms.push_back(w);
    cv.genders.push_back(rng.below(2) ? Gender::kFeminine : Gender::kMasculine);
    // Peaked distribution: one dominant class with random remaining mass.
    std::vector<double> p(classes);
    const auto dominant = rng.below(classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = c == dominant ? 2.0 + 4.0 * rng.uniform() : rng.uniform();
      total += p[c];
    }
    for (auto& x : p) x /= total;
    cv.class_probs.push_back(p);
  }

  for (std::size_t f = 0; f < forms; ++f) {
    for (std::size_t r = 0; r < per_form; ++r) {
      double u = rng.uniform();
      std::size_t label = classes - 1;
      for (std::size_t c = 0; c < classes; ++c) {
        if (u < cv.class_probs[f][c]) {
          label = c;
          break;
        }
        u -= cv.class_probs[f][c];
      }
      cv.set.instances.push_back({"w" + std::to_string(f), cv.forms[f], cv.genders[f],
                                  Etymology::kSemitic, label});
    }
  }
  return cv;
}

}  // namespace morphinfo::synthetic
