#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "morphinfo/experiment.hpp"
#include "morphinfo/hash.hpp"
#include "morphinfo/lexicon.hpp"
#include "morphinfo/neural.hpp"
#include "morphinfo/parallel.hpp"
#include "morphinfo/report.hpp"

// End-to-end orchestration: prune, expand, cross-validate the three model
// variants and assemble the report.
namespace morphinfo::pipeline {

struct Options {
  Task task = Task::kAllomorph;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t min_count = 20;
  nn::ModelConfig config;    // used when budget == 0
  std::size_t budget = 0;    // > 0: nested random search per outer fold
  std::size_t inner_k = 3;
  std::size_t jobs = 1;
  std::string dataset_path;
};

struct Datasets {
  Lexicon pruned;
  InstanceSet task_set;
  InstanceSet etymology_set;
  InstanceSet row_set;  // allomorph level, used for the row-population H(C|G)
  std::string hash;
  std::size_t rows_before = 0;
};

inline Datasets prepare(const Lexicon& raw, Task task, std::size_t min_count) {
  Datasets d;
  d.hash = dataset_hash(raw);
  d.rows_before = raw.entries.size();
  d.pruned = prune_classes(raw, min_count);
  d.task_set = build_instances(d.pruned, task);
  d.etymology_set = build_instances(d.pruned, Task::kEtymology);
  d.row_set = build_instances(d.pruned, Task::kAllomorph);
  return d;
}

struct Estimates {
  report::TaggedEval cw;   // C | W, G
  report::TaggedEval cew;  // C | W, E, G
  report::TaggedEval ew;   // E | W, G
  std::vector<experiment::SearchResult> searches;  // nested-search logs, if any
};

inline experiment::EvalResult evaluate_variant(const InstanceSet& set, const Options& opt,
                                               bool include_etymology, std::uint64_t variant_seed,
                                               std::vector<experiment::SearchResult>* searches) {
  const auto plan = experiment::make_folds(set, opt.k, opt.seed);
  if (opt.budget == 0) {
    auto cfg = opt.config;
    cfg.seed = variant_seed;
    return experiment::run_cv(set, cfg, plan, {include_etymology, opt.jobs});
  }
  experiment::SearchSpace space;
  space.budget = opt.budget;
  space.seed = variant_seed;
  auto nested = experiment::run_nested_cv(set, space, plan, opt.inner_k, {include_etymology, opt.jobs});
  if (searches) {
    searches->insert(searches->end(), nested.fold_searches.begin(), nested.fold_searches.end());
  }
  return nested.eval;
}

// The two class models share the fold plan (seeded by opt.seed) and model
// seeds; the etymology model uses its own instance set.
inline Estimates estimate(const Datasets& d, const Options& opt) {
  Estimates e;
  const auto model_seed = opt.seed;
  e.cw = {d.hash, evaluate_variant(d.task_set, opt, false, model_seed, &e.searches)};
  e.cew = {d.hash, evaluate_variant(d.task_set, opt, true, model_seed, &e.searches)};
  e.ew = {d.hash, evaluate_variant(d.etymology_set, opt, false, model_seed, &e.searches)};
  return e;
}

inline report::Provenance provenance(const Datasets& d, const Options& opt) {
  report::Provenance p;
  p.dataset_hash = d.hash;
  p.dataset_path = opt.dataset_path;
  p.seed = opt.seed;
  p.k = opt.k;
  p.min_count = opt.min_count;
  p.search_budget = opt.budget;
  p.config = opt.config;
  p.config.seed = opt.seed;
  p.rows_before_pruning = d.rows_before;
  p.rows_after_pruning = d.pruned.entries.size();
  return p;
}

inline report::MeasureReport build_report(const Datasets& d, const Estimates& e, const Options& opt) {
  const auto plugin = report::compute_plugin(d.task_set, d.etymology_set, d.row_set, d.hash);
  return report::assemble(opt.task, plugin, d.task_set, d.etymology_set, e.cw, e.cew, e.ew,
                          provenance(d, opt));
}

inline report::MeasureReport run(const Lexicon& raw, const Options& opt) {
  const auto d = prepare(raw, opt.task, opt.min_count);
  return build_report(d, estimate(d, opt), opt);
}

}  // namespace morphinfo::pipeline
