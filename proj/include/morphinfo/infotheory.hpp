#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphinfo/errors.hpp"
#include "morphinfo/lexicon.hpp"

// Plug-in (maximum-likelihood) information measures over finite categorical
// variables. Every quantity is in bits; 0 log 0 = 0; no smoothing.
namespace morphinfo::info {

inline constexpr double kDistributionTolerance = 1e-9;

// -p log2 p with the 0 log 0 = 0 convention.
inline double surprisal_term(double p) { return p > 0.0 ? -p * std::log2(p) : 0.0; }

class CategoricalDistribution {
 public:
  CategoricalDistribution() = default;
  CategoricalDistribution(std::vector<std::string> labels, std::vector<double> probabilities)
      : labels_(std::move(labels)), probs_(std::move(probabilities)) {
    if (labels_.size() != probs_.size()) {
      throw InvalidDistribution("label and probability counts differ");
    }
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidDistribution("negative or non-finite probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kDistributionTolerance) {
      throw InvalidDistribution("probabilities sum to " + std::to_string(sum));
    }
  }

  static CategoricalDistribution from_counts(std::vector<std::string> labels,
                                             std::span<const std::size_t> counts) {
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (total <= 0.0) throw InvalidDistribution("no observations");
    std::vector<double> probs;
    probs.reserve(counts.size());
    for (auto c : counts) probs.push_back(static_cast<double>(c) / total);
    return {std::move(labels), std::move(probs)};
  }

  std::size_t size() const { return probs_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<double>& probabilities() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  std::vector<std::string> labels_;
  std::vector<double> probs_;
};

inline double entropy(const CategoricalDistribution& dist) {
  double h = 0.0;
  for (double p : dist.probabilities()) h += surprisal_term(p);
  return h;
}

// Dense count table over named categorical axes.
class JointTable {
 public:
  struct Axis {
    std::string name;
    std::size_t cardinality;
  };

  explicit JointTable(std::vector<Axis> axes) : axes_(std::move(axes)) {
    std::size_t cells = 1;
    strides_.resize(axes_.size());
    for (std::size_t i = axes_.size(); i-- > 0;) {
      if (axes_[i].cardinality == 0) throw ShapeMismatch("axis '" + axes_[i].name + "' is empty");
      strides_[i] = cells;
      cells *= axes_[i].cardinality;
    }
    counts_.assign(cells, 0);
  }

  void add(std::span<const std::size_t> values, std::size_t weight = 1) {
    if (values.size() != axes_.size()) throw ShapeMismatch("observation arity mismatch");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] >= axes_[i].cardinality) throw ShapeMismatch("value out of range on " + axes_[i].name);
      flat += values[i] * strides_[i];
    }
    counts_[flat] += weight;
    total_ += weight;
  }
  void add(std::initializer_list<std::size_t> values, std::size_t weight = 1) {
    add(std::span<const std::size_t>(values.begin(), values.size()), weight);
  }

  const std::vector<Axis>& axes() const { return axes_; }
  const std::vector<std::size_t>& counts() const { return counts_; }
  std::size_t total() const { return total_; }

  std::size_t axis_index(const std::string& name) const {
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      if (axes_[i].name == name) return i;
    }
    throw UnknownAxis("no axis named '" + name + "'");
  }

  // Counts of the marginal over `keep` (axis indices), flattened in the order
  // given. Empty `keep` yields the single total.
  std::vector<std::size_t> marginal_counts(const std::vector<std::size_t>& keep) const {
    std::size_t cells = 1;
    for (auto a : keep) cells *= axes_[a].cardinality;
    std::vector<std::size_t> out(cells, 0);
    std::vector<std::size_t> coord(axes_.size(), 0);
    for (std::size_t flat = 0; flat < counts_.size(); ++flat) {
      if (counts_[flat] != 0) {
        std::size_t rem = flat;
        for (std::size_t i = 0; i < axes_.size(); ++i) {
          coord[i] = rem / strides_[i];
          rem %= strides_[i];
        }
        std::size_t idx = 0;
        for (auto a : keep) idx = idx * axes_[a].cardinality + coord[a];
        out[idx] += counts_[flat];
      }
    }
    return out;
  }

  // Plug-in joint entropy of the named axes.
  double joint_entropy(const std::vector<std::string>& names) const {
    if (total_ == 0) throw InvalidDistribution("entropy of an empty table");
    std::vector<std::size_t> keep;
    for (const auto& n : names) keep.push_back(axis_index(n));
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    const double total = static_cast<double>(total_);
    double h = 0.0;
    for (auto c : marginal_counts(keep)) h += surprisal_term(static_cast<double>(c) / total);
    return h;
  }

 private:
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

namespace detail {
inline void require_disjoint(const JointTable& joint, const std::string& target,
                             const std::vector<std::string>& given) {
  joint.axis_index(target);
  for (const auto& g : given) {
    joint.axis_index(g);
    if (g == target) throw UnknownAxis("axis '" + target + "' is both target and condition");
  }
}
}  // namespace detail

// H(target | given) = H(target, given) - H(given).
inline double conditional_entropy(const JointTable& joint, const std::string& target,
                                  const std::vector<std::string>& given) {
  detail::require_disjoint(joint, target, given);
  auto both = given;
  both.push_back(target);
  const double h = joint.joint_entropy(both) - joint.joint_entropy(given);
  return std::max(h, 0.0);
}

// MI(a; b | given) = H(a | given) - H(a | b, given).
inline double mutual_information(const JointTable& joint, const std::string& a,
                                 const std::string& b, const std::vector<std::string>& given) {
  if (a == b) throw UnknownAxis("mutual information needs two distinct axes");
  detail::require_disjoint(joint, a, given);
  detail::require_disjoint(joint, b, given);
  auto with_b = given;
  with_b.push_back(b);
  return conditional_entropy(joint, a, given) - conditional_entropy(joint, a, with_b);
}

// Interaction information MI(C;E;W) = MI(C;W) - MI(C;W|E). Signed.
inline double tripartite_mi(double mi_cw, double mi_cw_given_e) { return mi_cw - mi_cw_given_e; }

struct MeasureValue {
  std::string name;
  double value = 0.0;
  std::string unit = "bits";
  std::optional<std::string> normalizer;
  bool upper_bound = false;

  bool operator==(const MeasureValue&) const = default;
};

inline MeasureValue nmi(const MeasureValue& mi, const MeasureValue& normalizer) {
  if (!(normalizer.value > 0.0)) {
    throw ZeroNormalizer("cannot normalize " + mi.name + " by " + normalizer.name + " = " +
                         std::to_string(normalizer.value));
  }
  std::string name = mi.name;
  if (name.starts_with("MI(")) name = "N" + name;
  return {name, mi.value / normalizer.value, "ratio", normalizer.name, false};
}

inline void to_json(nlohmann::json& j, const MeasureValue& m) {
  j = {{"name", m.name}, {"value", m.value}, {"unit", m.unit}};
  j["normalizer"] = m.normalizer ? nlohmann::json(*m.normalizer) : nlohmann::json(nullptr);
  if (m.upper_bound) j["upper_bound"] = true;
}
inline void from_json(const nlohmann::json& j, MeasureValue& m) {
  m.name = j.at("name").get<std::string>();
  m.value = j.at("value").get<double>();
  m.unit = j.at("unit").get<std::string>();
  if (j.contains("normalizer") && !j.at("normalizer").is_null()) {
    m.normalizer = j.at("normalizer").get<std::string>();
  } else {
    m.normalizer.reset();
  }
  m.upper_bound = j.value("upper_bound", false);
}

// ---------------------------------------------------------------------------
// Tables built from instance sets.

// Axes "C" (instance label), "E" (etymology), "G" (gender).
inline JointTable joint_from_instances(const InstanceSet& set) {
  JointTable joint({{"C", std::max<std::size_t>(set.label_space.size(), 1)},
                    {"E", 2},
                    {"G", kNumGenders}});
  for (const auto& inst : set.instances) {
    joint.add({inst.label, static_cast<std::size_t>(inst.etymology),
               static_cast<std::size_t>(inst.gender)});
  }
  return joint;
}

// p̂(c | g) per gender. A gender absent from the data gets an empty
// distribution.
struct ClassGivenGender {
  std::vector<std::vector<double>> probs;  // [gender][class]
};

inline ClassGivenGender class_given_gender(const InstanceSet& set) {
  const std::size_t k = set.label_space.size();
  std::vector<std::vector<std::size_t>> counts(kNumGenders, std::vector<std::size_t>(k, 0));
  for (const auto& inst : set.instances) ++counts[static_cast<std::size_t>(inst.gender)][inst.label];
  ClassGivenGender out;
  out.probs.resize(kNumGenders);
  for (std::size_t g = 0; g < kNumGenders; ++g) {
    const double total = std::accumulate(counts[g].begin(), counts[g].end(), 0.0);
    if (total == 0.0) continue;
    out.probs[g].resize(k);
    for (std::size_t c = 0; c < k; ++c) out.probs[g][c] = counts[g][c] / total;
  }
  return out;
}

struct PerClassPmi {
  std::vector<std::string> labels;
  std::vector<std::size_t> counts;
  // Additive share of the model-based MI estimate; sums to
  // H(C|G) - cross-entropy over all classes.
  std::vector<double> part;
  // part scaled to a per-instance average within the class.
  std::vector<double> mean_pmi;
  // Mean of -log2 p̂(c|g) over instances of class c.
  std::vector<double> surprisal;

  double total() const { return std::accumulate(part.begin(), part.end(), 0.0); }
};

// part(c) = (1/M) Σ_{i: c_i = c} [log2 q(c | w_i, g_i) - log2 p̂(c | g_i)].
inline PerClassPmi per_class_pmi(const InstanceSet& set,
                                 const std::vector<std::vector<double>>& model_probs,
                                 const ClassGivenGender& class_marginal) {
  if (model_probs.size() != set.instances.size()) {
    throw AlignmentMismatch("model_probs has " + std::to_string(model_probs.size()) +
                            " rows for " + std::to_string(set.instances.size()) + " instances");
  }
  const std::size_t k = set.label_space.size();
  PerClassPmi out;
  out.labels = set.label_space;
  out.counts.assign(k, 0);
  out.part.assign(k, 0.0);
  out.mean_pmi.assign(k, 0.0);
  out.surprisal.assign(k, 0.0);
  if (set.instances.empty()) return out;

  const double m = static_cast<double>(set.instances.size());
  for (std::size_t i = 0; i < set.instances.size(); ++i) {
    const auto& inst = set.instances[i];
    if (model_probs[i].size() != k) throw AlignmentMismatch("model output width != label space");
    const auto& marg = class_marginal.probs.at(static_cast<std::size_t>(inst.gender));
    if (marg.size() != k || !(marg[inst.label] > 0.0)) {
      throw AlignmentMismatch("class marginal does not cover instance " + std::to_string(i));
    }
    const double log_marg = std::log2(marg[inst.label]);
    out.part[inst.label] += (std::log2(model_probs[i][inst.label]) - log_marg) / m;
    out.surprisal[inst.label] -= log_marg;
    ++out.counts[inst.label];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (out.counts[c] == 0) continue;
    out.mean_pmi[c] = out.part[c] * m / static_cast<double>(out.counts[c]);
    out.surprisal[c] /= static_cast<double>(out.counts[c]);
  }
  return out;
}

}  // namespace morphinfo::info
