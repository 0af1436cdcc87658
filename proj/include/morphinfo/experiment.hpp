#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphinfo/errors.hpp"
#include "morphinfo/infotheory.hpp"
#include "morphinfo/lexicon.hpp"
#include "morphinfo/neural.hpp"
#include "morphinfo/parallel.hpp"
#include "morphinfo/rng.hpp"

namespace morphinfo::experiment {

// Stratified k-fold assignment.
struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignments;  // fold index per instance

  bool operator==(const FoldPlan&) const = default;

  std::vector<std::size_t> held_out(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == fold) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> training(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != fold) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto f : assignments) ++sizes[f];
    return sizes;
  }
};

// Each label's instances are shuffled, the strata are laid end to end in
// label order, and positions are dealt round-robin over the k folds. Strata
// smaller than k are covered by the same dealing.
inline FoldPlan make_folds(const InstanceSet& set, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("k must be >= 2");
  if (set.size() < k) {
    throw TooFewInstances("need at least " + std::to_string(k) + " instances, have " +
                          std::to_string(set.size()));
  }
  std::vector<std::vector<std::size_t>> strata(set.label_space.size());
  for (std::size_t i = 0; i < set.size(); ++i) strata[set.instances[i].label].push_back(i);

  FoldPlan plan{k, seed, std::vector<std::size_t>(set.size(), 0)};
  std::size_t position = 0;
  for (std::size_t label = 0; label < strata.size(); ++label) {
    Rng rng(derive_seed(seed, label));
    rng.shuffle(std::span<std::size_t>(strata[label]));
    for (auto idx : strata[label]) plan.assignments[idx] = position++ % k;
  }
  return plan;
}

inline double majority_baseline(const InstanceSet& set) {
  if (set.empty()) throw TooFewInstances("majority baseline of an empty set");
  const auto counts = set.label_counts();
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(set.size());
}

// Rows are gold labels, columns predicted labels.
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

struct EvalResult {
  std::vector<std::string> labels;
  double cross_entropy_bits = 0.0;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<std::vector<double>> per_instance_probs;
  std::vector<double> fold_cross_entropy;
  std::vector<nn::ModelConfig> fold_configs;

  bool operator==(const EvalResult&) const = default;
};

// Lowest label index wins ties.
inline std::size_t predict_label(const std::vector<double>& probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// Pools held-out predictions (aligned with `set`) into an EvalResult.
inline EvalResult summarize(const InstanceSet& set, std::vector<std::vector<double>> probs) {
  if (probs.size() != set.size()) throw AlignmentMismatch("prediction count != instance count");
  EvalResult r;
  r.labels = set.label_space;
  const std::size_t k = set.label_space.size();
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto gold = set.instances[i].label;
    const auto pred = predict_label(probs[i]);
    ++r.confusion[gold][pred];
    if (gold == pred) ++correct;
    loss_sum += nn::loss(probs[i], gold);
  }
  const double m = static_cast<double>(set.size());
  r.cross_entropy_bits = loss_sum / m;
  r.accuracy = static_cast<double>(correct) / m;
  r.per_instance_probs = std::move(probs);
  return r;
}

// Trains on the fold's training part with a fresh vocabulary and predicts the
// held-out part.
inline std::vector<std::vector<double>> fit_and_predict(const InstanceSet& training,
                                                        const InstanceSet& held_out,
                                                        const nn::ModelConfig& config,
                                                        bool include_etymology) {
  auto model = nn::initialize(config, nn::Vocabulary::build(training));
  nn::train(model, training, include_etymology);
  std::vector<std::vector<double>> out;
  out.reserve(held_out.size());
  for (const auto& inst : held_out.instances) {
    out.push_back(nn::forward(model, nn::encode(inst, model.vocabulary, include_etymology)));
  }
  return out;
}

struct CvOptions {
  bool include_etymology = false;
  std::size_t jobs = 1;
};

// k-fold cross-validation with one model per fold. Fold f trains with seed
// derive_seed(config.seed, f). Cross-entropy is the mean held-out surprisal
// pooled over every instance.
inline EvalResult run_cv(const InstanceSet& set, const nn::ModelConfig& config,
                         const FoldPlan& plan, const CvOptions& options = {}) {
  if (plan.assignments.size() != set.size()) throw AlignmentMismatch("fold plan does not match instances");
  std::vector<std::vector<double>> probs(set.size());
  std::vector<double> fold_ce(plan.k, 0.0);
  std::vector<nn::ModelConfig> fold_configs(plan.k, config);
  parallel_for(plan.k, options.jobs, [&](std::size_t fold) {
    const auto train_idx = plan.training(fold);
    const auto test_idx = plan.held_out(fold);
    if (test_idx.empty()) return;
    auto cfg = config;
    cfg.seed = derive_seed(config.seed, fold);
    fold_configs[fold] = cfg;
    auto preds = fit_and_predict(set.subset(train_idx), set.subset(test_idx), cfg,
                                 options.include_etymology);
    double ce = 0.0;
    for (std::size_t j = 0; j < test_idx.size(); ++j) {
      ce += nn::loss(preds[j], set.instances[test_idx[j]].label);
      probs[test_idx[j]] = std::move(preds[j]);
    }
    fold_ce[fold] = ce / static_cast<double>(test_idx.size());
  });
  auto result = summarize(set, std::move(probs));
  result.fold_cross_entropy = std::move(fold_ce);
  result.fold_configs = std::move(fold_configs);
  return result;
}

inline EvalResult run_cv(const InstanceSet& set, const nn::ModelConfig& config, std::size_t k,
                         const CvOptions& options = {}) {
  return run_cv(set, config, make_folds(set, k, config.seed), options);
}

// Cross-entropy upper bound on H(C | W, G) (or whichever conditioning the
// model saw), in bits.
inline info::MeasureValue estimate_upper_bound(const EvalResult& eval,
                                               std::string name = "H(C|W,G)") {
  return {std::move(name), eval.cross_entropy_bits, "bits", std::nullopt, true};
}

// ---------------------------------------------------------------------------
// Hyperparameter search.

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  bool operator==(const IntRange&) const = default;
};

struct SearchSpace {
  IntRange char_embedding_dim{16, 128};
  IntRange layers{1, 2};
  IntRange hidden_dim{32, 256};
  IntRange epochs{10, 100};
  double learning_rate_lo = 1e-4;  // sampled log-uniformly
  double learning_rate_hi = 1e-2;
  std::vector<std::size_t> batch_sizes{16, 32, 64};
  std::size_t budget = 20;
  std::uint64_t seed = 0;
  // When non-empty, trials walk these configurations in order (cycling)
  // instead of sampling the ranges.
  std::vector<nn::ModelConfig> candidates;

  void validate() const {
    if (budget == 0) throw Error("search budget must be >= 1");
    auto bad = [](const IntRange& r) { return r.lo < 1 || r.hi < r.lo; };
    if (bad(char_embedding_dim) || bad(layers) || bad(hidden_dim) || bad(epochs)) {
      throw Error("search ranges must be non-empty and positive");
    }
    if (!(learning_rate_lo > 0.0) || learning_rate_hi < learning_rate_lo) {
      throw Error("learning-rate range must be positive and non-empty");
    }
    if (batch_sizes.empty()) throw Error("no batch sizes to search");
  }

  nn::ModelConfig sample(std::size_t trial) const {
    if (!candidates.empty()) return candidates[trial % candidates.size()];
    Rng rng(derive_seed(seed, trial));
    nn::ModelConfig c;
    c.char_embedding_dim = static_cast<std::size_t>(rng.between(char_embedding_dim.lo, char_embedding_dim.hi));
    const auto n_layers = static_cast<std::size_t>(rng.between(layers.lo, layers.hi));
    c.hidden_dims.clear();
    for (std::size_t l = 0; l < n_layers; ++l) {
      c.hidden_dims.push_back(static_cast<std::size_t>(rng.between(hidden_dim.lo, hidden_dim.hi)));
    }
    c.gender_embedding_dim = c.hidden_dims.front();
    c.epochs = static_cast<std::size_t>(rng.between(epochs.lo, epochs.hi));
    c.learning_rate = rng.log_uniform(learning_rate_lo, learning_rate_hi);
    c.batch_size = batch_sizes[rng.below(batch_sizes.size())];
    c.seed = derive_seed(seed, 0x7A1A1000ULL + trial);
    return c;
  }
};

struct Trial {
  std::size_t index = 0;
  nn::ModelConfig config;
  double score = std::numeric_limits<double>::infinity();  // CV cross-entropy, bits
  bool diverged = false;
  std::string error;

  bool operator==(const Trial&) const = default;
};

struct SearchResult {
  nn::ModelConfig best;
  std::size_t best_index = 0;
  std::vector<Trial> trials;

  bool operator==(const SearchResult&) const = default;
};

struct SearchOptions {
  bool include_etymology = false;
  std::size_t jobs = 1;
};

// Seeded random search; each trial is scored by k-fold CV cross-entropy on
// `set`. Diverging trials score +inf. Ties go to the earliest trial.
inline SearchResult search(const SearchSpace& space, const InstanceSet& set, std::size_t k,
                           const SearchOptions& options = {}) {
  space.validate();
  const auto plan = make_folds(set, k, derive_seed(space.seed, 0xF01D5ULL));
  std::vector<Trial> trials(space.budget);
  parallel_for(space.budget, options.jobs, [&](std::size_t t) {
    Trial trial;
    trial.index = t;
    trial.config = space.sample(t);
    try {
      const auto eval = run_cv(set, trial.config, plan, {options.include_etymology, 1});
      trial.score = eval.cross_entropy_bits;
      if (!std::isfinite(trial.score)) {
        trial.diverged = true;
        trial.score = std::numeric_limits<double>::infinity();
      }
    } catch (const NonFiniteLoss& e) {
      trial.diverged = true;
      trial.error = e.what();
    }
    trials[t] = std::move(trial);
  });

  SearchResult result;
  result.trials = std::move(trials);
  for (std::size_t t = 1; t < result.trials.size(); ++t) {
    if (result.trials[t].score < result.trials[result.best_index].score) result.best_index = t;
  }
  result.best = result.trials[result.best_index].config;
  return result;
}

struct NestedCvResult {
  EvalResult eval;
  std::vector<SearchResult> fold_searches;
};

// Outer k-fold CV where each outer fold picks its configuration by searching
// only its own training part (inner CV with `inner_k` folds).
inline NestedCvResult run_nested_cv(const InstanceSet& set, const SearchSpace& space,
                                    const FoldPlan& plan, std::size_t inner_k,
                                    const CvOptions& options = {}) {
  std::vector<std::vector<double>> probs(set.size());
  NestedCvResult out;
  out.fold_searches.resize(plan.k);
  std::vector<double> fold_ce(plan.k, 0.0);
  std::vector<nn::ModelConfig> fold_configs(plan.k);
  parallel_for(plan.k, options.jobs, [&](std::size_t fold) {
    const auto train_set = set.subset(plan.training(fold));
    const auto test_idx = plan.held_out(fold);
    auto fold_space = space;
    fold_space.seed = derive_seed(space.seed, fold);
    auto found = search(fold_space, train_set, inner_k, {options.include_etymology, 1});
    auto preds = fit_and_predict(train_set, set.subset(test_idx), found.best,
                                 options.include_etymology);
    double ce = 0.0;
    for (std::size_t j = 0; j < test_idx.size(); ++j) {
      ce += nn::loss(preds[j], set.instances[test_idx[j]].label);
      probs[test_idx[j]] = std::move(preds[j]);
    }
    fold_ce[fold] = test_idx.empty() ? 0.0 : ce / static_cast<double>(test_idx.size());
    fold_configs[fold] = found.best;
    out.fold_searches[fold] = std::move(found);
  });
  out.eval = summarize(set, std::move(probs));
  out.eval.fold_cross_entropy = std::move(fold_ce);
  out.eval.fold_configs = std::move(fold_configs);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const EvalResult& r, bool include_probs = true) {
  nlohmann::json j = {{"labels", r.labels},
                      {"cross_entropy_bits", r.cross_entropy_bits},
                      {"accuracy", r.accuracy},
                      {"confusion", r.confusion},
                      {"fold_cross_entropy", r.fold_cross_entropy},
                      {"fold_configs", r.fold_configs}};
  if (include_probs) j["per_instance_probs"] = r.per_instance_probs;
  return j;
}

inline EvalResult eval_from_json(const nlohmann::json& j) {
  EvalResult r;
  r.labels = j.at("labels").get<std::vector<std::string>>();
  r.cross_entropy_bits = j.at("cross_entropy_bits").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.confusion = j.at("confusion").get<ConfusionMatrix>();
  r.fold_cross_entropy = j.value("fold_cross_entropy", std::vector<double>{});
  r.fold_configs = j.value("fold_configs", std::vector<nn::ModelConfig>{});
  r.per_instance_probs = j.value("per_instance_probs", std::vector<std::vector<double>>{});
  return r;
}

inline nlohmann::json to_json(const Trial& t) {
  nlohmann::json j = {{"index", t.index}, {"config", t.config}, {"diverged", t.diverged}};
  j["score"] = std::isfinite(t.score) ? nlohmann::json(t.score) : nlohmann::json(nullptr);
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

inline nlohmann::json to_json(const SearchResult& s) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : s.trials) trials.push_back(to_json(t));
  return {{"best_index", s.best_index}, {"best", s.best}, {"trials", trials}};
}

inline std::string confusion_to_csv(const std::vector<std::string>& labels, const ConfusionMatrix& m) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream out;
  out << "gold\\predicted";
  for (const auto& l : labels) out << ',' << quote(l);
  out << '\n';
  for (std::size_t r = 0; r < m.size(); ++r) {
    out << quote(labels[r]);
    for (auto c : m[r]) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

}  // namespace morphinfo::experiment
