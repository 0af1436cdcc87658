#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "morphinfo/experiment.hpp"
#include "morphinfo/synthetic.hpp"
#include "morphinfo/testing/oracles.hpp"

using namespace morphinfo;
using namespace morphinfo::experiment;

namespace {

InstanceSet labelled(const std::vector<std::size_t>& counts) {
  InstanceSet s;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    s.label_space.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i) {
      s.instances.push_back({"l", {"a", "b"}, Gender::kMasculine, Etymology::kSemitic, c});
    }
  }
  return s;
}

nn::ModelConfig tiny(std::size_t epochs = 20, double lr = 2e-2) {
  nn::ModelConfig c;
  c.char_embedding_dim = 8;
  c.hidden_dims = {12};
  c.gender_embedding_dim = 12;
  c.epochs = epochs;
  c.learning_rate = lr;
  c.batch_size = 16;
  c.seed = 4;
  return c;
}

}  // namespace

TEST(Folds, SizesOnLargeSet) {
  const auto set = labelled({1274, 416, 684, 240, 537, 21, 2});
  ASSERT_EQ(set.size(), 3174u);
  const auto plan = make_folds(set, 10, 1);
  for (auto n : plan.fold_sizes()) {
    EXPECT_GE(n, 317u);
    EXPECT_LE(n, 318u);
  }
}

TEST(Folds, ExactDivisionWithinStratum) {
  const auto plan = make_folds(labelled({20}), 10, 3);
  for (auto n : plan.fold_sizes()) EXPECT_EQ(n, 2u);
}

TEST(Folds, StratifiedAcrossLabels) {
  const auto set = labelled({40, 30, 7});
  const auto plan = make_folds(set, 10, 5);
  for (std::size_t f = 0; f < 10; ++f) {
    std::vector<std::size_t> per(3, 0);
    for (auto i : plan.held_out(f)) ++per[set.instances[i].label];
    EXPECT_EQ(per[0], 4u);
    EXPECT_EQ(per[1], 3u);
    EXPECT_LE(per[2], 1u);
  }
}

TEST(Folds, DeterministicAndPartitioning) {
  const auto set = synthetic::last_symbol_task(123, 5, 2);
  EXPECT_EQ(make_folds(set, 7, 9), make_folds(set, 7, 9));
  EXPECT_NE(make_folds(set, 7, 9).assignments, make_folds(set, 7, 10).assignments);
  const auto plan = make_folds(set, 7, 9);
  std::set<std::size_t> seen;
  for (std::size_t f = 0; f < 7; ++f) {
    for (auto i : plan.held_out(f)) EXPECT_TRUE(seen.insert(i).second);
    EXPECT_EQ(plan.held_out(f).size() + plan.training(f).size(), set.size());
  }
  EXPECT_EQ(seen.size(), set.size());
}

TEST(Folds, Errors) {
  EXPECT_THROW(make_folds(labelled({3}), 10, 0), TooFewInstances);
  EXPECT_THROW(make_folds(labelled({30}), 1, 0), Error);
}

TEST(Baseline, Majority) {
  EXPECT_DOUBLE_EQ(majority_baseline(labelled({5, 5})), 0.5);
  const auto set = synthetic::last_symbol_task(97, 6, 3);
  std::vector<std::string> labels;
  for (const auto& i : set.instances) labels.push_back(set.label_space[i.label]);
  EXPECT_DOUBLE_EQ(majority_baseline(set), oracle::majority(labels));
  EXPECT_THROW(majority_baseline(InstanceSet{}), TooFewInstances);
}

TEST(Summarize, TieBreakAndConfusionTrace) {
  const auto set = labelled({2, 2});
  const auto r = summarize(set, {{0.5, 0.5}, {0.9, 0.1}, {0.5, 0.5}, {0.2, 0.8}});
  EXPECT_EQ(r.confusion[0][0], 2u);
  EXPECT_EQ(r.confusion[1][0], 1u);
  EXPECT_EQ(r.confusion[1][1], 1u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  const double ce = (1.0 + -std::log2(0.9) + 1.0 + -std::log2(0.8)) / 4.0;
  EXPECT_NEAR(r.cross_entropy_bits, ce, 1e-12);
}

TEST(UpperBound, PerfectAndMarginalModels) {
  const auto set = labelled({3, 1});
  const auto perfect = summarize(set, {{1, 0}, {1, 0}, {1, 0}, {0, 1}});
  EXPECT_EQ(estimate_upper_bound(perfect).value, 0.0);
  EXPECT_TRUE(estimate_upper_bound(perfect).upper_bound);
  const auto marginal = summarize(set, std::vector<std::vector<double>>(4, {0.75, 0.25}));
  const double h = -(0.75 * std::log2(0.75) + 0.25 * std::log2(0.25));
  EXPECT_NEAR(estimate_upper_bound(marginal).value, h, 1e-12);
}

TEST(CrossValidation, CoverageDeterminismAndConfusion) {
  const auto set = synthetic::last_symbol_task(120, 4, 6);
  const auto plan = make_folds(set, 4, 2);
  const auto a = run_cv(set, tiny(5), plan, {false, 1});
  const auto b = run_cv(set, tiny(5), plan, {false, 3});
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.per_instance_probs.size(), set.size());
  std::size_t total = 0, trace = 0;
  for (std::size_t r = 0; r < a.confusion.size(); ++r) {
    for (std::size_t c = 0; c < a.confusion.size(); ++c) total += a.confusion[r][c];
    trace += a.confusion[r][r];
  }
  EXPECT_EQ(total, set.size());
  EXPECT_EQ(static_cast<double>(trace) / static_cast<double>(total), a.accuracy);
  double pooled = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) pooled -= std::log2(a.per_instance_probs[i][set.instances[i].label]);
  EXPECT_NEAR(pooled / set.size(), a.cross_entropy_bits, 1e-12);
}

TEST(CrossValidation, LearnsLastSymbol) {
  const auto set = synthetic::last_symbol_task(400, 4, 7);
  const auto r = run_cv(set, tiny(30), 5);
  EXPECT_GT(r.accuracy, 0.95);
}

TEST(CrossValidation, EvalJsonRoundTrip) {
  const auto set = synthetic::last_symbol_task(40, 3, 6);
  const auto r = run_cv(set, tiny(2), 4);
  EXPECT_EQ(eval_from_json(nlohmann::json::parse(to_json(r).dump())), r);
}

TEST(Search, BudgetOneReturnsSampledConfig) {
  SearchSpace space;
  space.char_embedding_dim = {4, 8};
  space.hidden_dim = {4, 8};
  space.epochs = {1, 2};
  space.budget = 1;
  space.seed = 12;
  const auto set = synthetic::last_symbol_task(30, 3, 1);
  const auto r = search(space, set, 3);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best, space.sample(0));
  EXPECT_EQ(r.best_index, 0u);
}

TEST(Search, PrefersGoodOverDegenerate) {
  SearchSpace space;
  auto bad = tiny(20, 10.0);
  auto good = tiny(20, 2e-2);
  space.candidates = {bad, good};
  space.budget = 2;
  space.seed = 3;
  const auto set = synthetic::last_symbol_task(150, 4, 3);
  const auto r = search(space, set, 3);
  EXPECT_EQ(r.best, good);
  EXPECT_EQ(r.best_index, 1u);
  EXPECT_TRUE(r.trials[0].diverged || r.trials[0].score > r.trials[1].score);
}

TEST(Search, SameSeedSameTrialLog) {
  SearchSpace space;
  space.char_embedding_dim = {2, 6};
  space.hidden_dim = {2, 6};
  space.epochs = {1, 3};
  space.budget = 3;
  space.seed = 99;
  const auto set = synthetic::last_symbol_task(40, 3, 4);
  const auto a = search(space, set, 3, {false, 1});
  const auto b = search(space, set, 3, {false, 2});
  EXPECT_EQ(a, b);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Search, SampledConfigsRespectRanges) {
  SearchSpace space;
  space.seed = 5;
  for (std::size_t t = 0; t < 50; ++t) {
    const auto c = space.sample(t);
    EXPECT_GE(c.char_embedding_dim, 16u);
    EXPECT_LE(c.char_embedding_dim, 128u);
    EXPECT_GE(c.hidden_dims.size(), 1u);
    EXPECT_LE(c.hidden_dims.size(), 2u);
    for (auto h : c.hidden_dims) {
      EXPECT_GE(h, 32u);
      EXPECT_LE(h, 256u);
    }
    EXPECT_GE(c.learning_rate, 1e-4);
    EXPECT_LE(c.learning_rate, 1e-2);
    EXPECT_TRUE(c.batch_size == 16 || c.batch_size == 32 || c.batch_size == 64);
    EXPECT_NO_THROW(c.validate());
  }
}

TEST(NestedCv, OuterFoldsSearchIndependently) {
  SearchSpace space;
  space.char_embedding_dim = {2, 6};
  space.hidden_dim = {2, 6};
  space.epochs = {1, 3};
  space.budget = 2;
  space.seed = 8;
  const auto set = synthetic::last_symbol_task(60, 3, 4);
  const auto plan = make_folds(set, 3, 1);
  const auto r = run_nested_cv(set, space, plan, 3);
  EXPECT_EQ(r.fold_searches.size(), 3u);
  EXPECT_EQ(r.eval.per_instance_probs.size(), set.size());
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(r.eval.fold_configs[f], r.fold_searches[f].best);
}
