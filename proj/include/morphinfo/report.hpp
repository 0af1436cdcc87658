#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphinfo/errors.hpp"
#include "morphinfo/experiment.hpp"
#include "morphinfo/infotheory.hpp"
#include "morphinfo/lexicon.hpp"

namespace morphinfo::report {

// Plug-in quantities over the finite systems C, E, G.
struct PluginMeasures {
  std::string dataset_hash;
  double h_c_given_g = 0.0;
  double h_c_given_eg = 0.0;
  double mi_ce_given_g = 0.0;
  double h_e_given_g = 0.0;  // over the one-instance-per-lexeme population
  // H(C|G) with C counted once per (lexeme, plural) row; equals h_c_given_g
  // for the allomorph task.
  double h_c_given_g_rows = 0.0;
  std::size_t instances = 0;
  std::size_t lexemes = 0;
};

inline PluginMeasures compute_plugin(const InstanceSet& task_set, const InstanceSet& etymology_set,
                                     const InstanceSet& row_level_set, std::string dataset_hash) {
  const auto joint = info::joint_from_instances(task_set);
  const auto ejoint = info::joint_from_instances(etymology_set);
  PluginMeasures m;
  m.dataset_hash = std::move(dataset_hash);
  m.h_c_given_g = info::conditional_entropy(joint, "C", {"G"});
  m.h_c_given_eg = info::conditional_entropy(joint, "C", {"E", "G"});
  m.mi_ce_given_g = info::mutual_information(joint, "C", "E", {"G"});
  m.h_e_given_g = info::conditional_entropy(ejoint, "C", {"G"});
  m.instances = task_set.size();
  m.lexemes = etymology_set.size();

  // Row-level population, relabelled with the task's label where needed.
  if (task_set.task == Task::kType) {
    info::JointTable rows({{"C", 2}, {"G", kNumGenders}});
    for (const auto& inst : row_level_set.instances) {
      const auto* a = find_allomorph(row_level_set.label_space[inst.label]);
      const auto type = a ? static_cast<std::size_t>(a->concat_type) : 0;
      rows.add({type, static_cast<std::size_t>(inst.gender)});
    }
    m.h_c_given_g_rows = rows.total() ? info::conditional_entropy(rows, "C", {"G"}) : 0.0;
  } else {
    m.h_c_given_g_rows = m.h_c_given_g;
  }
  return m;
}

// An evaluation tagged with the dataset it came from.
struct TaggedEval {
  std::string dataset_hash;
  experiment::EvalResult eval;
};

struct Provenance {
  std::string dataset_hash;
  std::string dataset_path;
  std::uint64_t seed = 0;
  std::size_t k = 10;
  std::size_t min_count = 20;
  std::size_t search_budget = 0;  // 0: fixed config, no search
  nn::ModelConfig config;
  std::size_t rows_before_pruning = 0;
  std::size_t rows_after_pruning = 0;

  bool operator==(const Provenance&) const = default;
};

struct MeasureReport {
  Task task = Task::kAllomorph;
  std::vector<info::MeasureValue> measures;  // raw plug-in, cross-entropy and MI values

  double entropy_c_given_g = 0.0;
  double nmi_cw_g = 0.0;
  double nmi_ce_g = 0.0;
  double nmi_cew_g = 0.0;
  double nmi_ew_g = 0.0;

  std::map<std::string, double> accuracies;  // model -> accuracy
  std::map<std::string, double> baselines;   // target -> majority accuracy
  std::vector<std::string> labels;
  experiment::ConfusionMatrix confusion;
  info::PerClassPmi pmi;
  Provenance provenance;

  bool operator==(const MeasureReport& o) const {
    return task == o.task && measures == o.measures && entropy_c_given_g == o.entropy_c_given_g &&
           nmi_cw_g == o.nmi_cw_g && nmi_ce_g == o.nmi_ce_g && nmi_cew_g == o.nmi_cew_g &&
           nmi_ew_g == o.nmi_ew_g && accuracies == o.accuracies && baselines == o.baselines &&
           labels == o.labels && confusion == o.confusion && pmi.labels == o.pmi.labels &&
           pmi.counts == o.pmi.counts && pmi.part == o.pmi.part && pmi.mean_pmi == o.pmi.mean_pmi &&
           pmi.surprisal == o.pmi.surprisal && provenance == o.provenance;
  }

  const info::MeasureValue& measure(const std::string& name) const {
    for (const auto& m : measures) {
      if (m.name == name) return m;
    }
    throw Error("report has no measure '" + name + "'");
  }
};

// Combines plug-in entropies with the three cross-validated models:
//   cw  - class from form and gender,
//   cew - class from form, etymology and gender,
//   ew  - etymology from form and gender.
// Model-based MI values are clipped at zero before normalizing; the raw
// values stay in `measures`. The tripartite value is reported signed.
inline MeasureReport assemble(Task task, const PluginMeasures& plugin, const InstanceSet& task_set,
                              const InstanceSet& etymology_set, const TaggedEval& cw,
                              const TaggedEval& cew, const TaggedEval& ew, Provenance provenance) {
  for (const std::string* h : std::initializer_list<const std::string*>{&cw.dataset_hash, &cew.dataset_hash, &ew.dataset_hash, &provenance.dataset_hash}) {
    if (*h != plugin.dataset_hash) {
      throw InconsistentProvenance("inputs come from different datasets (" + plugin.dataset_hash +
                                   " vs " + *h + ")");
    }
  }
  if (cw.eval.per_instance_probs.size() != task_set.size() ||
      cew.eval.per_instance_probs.size() != task_set.size() ||
      ew.eval.per_instance_probs.size() != etymology_set.size()) {
    throw AlignmentMismatch("evaluation results do not cover the instance sets");
  }

  MeasureReport r;
  r.task = task;
  r.provenance = std::move(provenance);
  const double h_cg = plugin.h_c_given_g;
  const double h_eg = plugin.h_e_given_g;
  const double ce_cw = cw.eval.cross_entropy_bits;
  const double ce_cew = cew.eval.cross_entropy_bits;
  const double ce_ew = ew.eval.cross_entropy_bits;
  const double mi_cw = h_cg - ce_cw;
  const double mi_cw_e = plugin.h_c_given_eg - ce_cew;
  const double mi_ew = h_eg - ce_ew;
  const double tri = info::tripartite_mi(mi_cw, mi_cw_e);

  auto bits = [](std::string name, double v, bool bound = false) {
    return info::MeasureValue{std::move(name), v, "bits", std::nullopt, bound};
  };
  r.measures = {bits("H(C|G)", h_cg),
                bits("H(C|E,G)", plugin.h_c_given_eg),
                bits("H(E|G)", h_eg),
                bits("H(C|G)[rows]", plugin.h_c_given_g_rows),
                bits("H(C|W,G)", ce_cw, true),
                bits("H(C|W,E,G)", ce_cew, true),
                bits("H(E|W,G)", ce_ew, true),
                bits("MI(C;E|G)", plugin.mi_ce_given_g),
                bits("MI(C;W|G)", mi_cw),
                bits("MI(C;W|E,G)", mi_cw_e),
                bits("MI(C;E;W|G)", tri),
                bits("MI(E;W|G)", mi_ew)};

  const info::MeasureValue norm_c = bits("H(C|G)", h_cg);
  const info::MeasureValue norm_e = bits("H(E|G)", h_eg);
  auto clipped = [&](const char* name, double v) { return bits(name, std::max(v, 0.0)); };
  r.entropy_c_given_g = h_cg;
  r.nmi_cw_g = info::nmi(clipped("MI(C;W|G)", mi_cw), norm_c).value;
  r.nmi_ce_g = info::nmi(clipped("MI(C;E|G)", plugin.mi_ce_given_g), norm_c).value;
  r.nmi_cew_g = r.nmi_cw_g - info::nmi(clipped("MI(C;W|E,G)", mi_cw_e), norm_c).value;
  r.nmi_ew_g = info::nmi(clipped("MI(E;W|G)", mi_ew), norm_e).value;

  r.accuracies = {{"MI(C;W|G)", cw.eval.accuracy},
                  {"MI(C;E;W|G)", cew.eval.accuracy},
                  {"MI(E;W|G)", ew.eval.accuracy}};
  r.baselines = {{std::string(to_string(task)), experiment::majority_baseline(task_set)},
                 {"etymology", experiment::majority_baseline(etymology_set)}};
  r.labels = task_set.label_space;
  r.confusion = cw.eval.confusion;
  r.pmi = info::per_class_pmi(task_set, cw.eval.per_instance_probs,
                              info::class_given_gender(task_set));
  return r;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const Provenance& p) {
  return {{"dataset_hash", p.dataset_hash},
          {"dataset_path", p.dataset_path},
          {"seed", p.seed},
          {"k", p.k},
          {"min_count", p.min_count},
          {"search_budget", p.search_budget},
          {"config", p.config},
          {"rows_before_pruning", p.rows_before_pruning},
          {"rows_after_pruning", p.rows_after_pruning}};
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.dataset_hash = j.at("dataset_hash").get<std::string>();
  p.dataset_path = j.at("dataset_path").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.k = j.at("k").get<std::size_t>();
  p.min_count = j.at("min_count").get<std::size_t>();
  p.search_budget = j.at("search_budget").get<std::size_t>();
  p.config = j.at("config").get<nn::ModelConfig>();
  p.rows_before_pruning = j.at("rows_before_pruning").get<std::size_t>();
  p.rows_after_pruning = j.at("rows_after_pruning").get<std::size_t>();
  return p;
}

inline nlohmann::json to_json(const MeasureReport& r) {
  nlohmann::json pmi = nlohmann::json::array();
  for (std::size_t c = 0; c < r.pmi.labels.size(); ++c) {
    pmi.push_back({{"class", r.pmi.labels[c]},
                   {"count", r.pmi.counts[c]},
                   {"pmi", r.pmi.part[c]},
                   {"mean_pmi", r.pmi.mean_pmi[c]},
                   {"surprisal", r.pmi.surprisal[c]}});
  }
  return {{"format", "morphinfo-report"},
          {"version", 1},
          {"task", to_string(r.task)},
          {"measures", r.measures},
          {"entropy_C_given_G", r.entropy_c_given_g},
          {"nmi",
           {{"NMI(C;W|G)", r.nmi_cw_g},
            {"NMI(C;E|G)", r.nmi_ce_g},
            {"NMI(C;E;W|G)", r.nmi_cew_g},
            {"NMI(E;W|G)", r.nmi_ew_g}}},
          {"accuracies", r.accuracies},
          {"baselines", r.baselines},
          {"labels", r.labels},
          {"confusion", r.confusion},
          {"pmi_per_class", pmi},
          {"provenance", to_json(r.provenance)}};
}

inline MeasureReport report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "morphinfo-report") throw Error("not a morphinfo report");
  MeasureReport r;
  const auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Error("unknown task in report");
  r.task = *task;
  r.measures = j.at("measures").get<std::vector<info::MeasureValue>>();
  r.entropy_c_given_g = j.at("entropy_C_given_G").get<double>();
  const auto& n = j.at("nmi");
  r.nmi_cw_g = n.at("NMI(C;W|G)").get<double>();
  r.nmi_ce_g = n.at("NMI(C;E|G)").get<double>();
  r.nmi_cew_g = n.at("NMI(C;E;W|G)").get<double>();
  r.nmi_ew_g = n.at("NMI(E;W|G)").get<double>();
  r.accuracies = j.at("accuracies").get<std::map<std::string, double>>();
  r.baselines = j.at("baselines").get<std::map<std::string, double>>();
  r.labels = j.at("labels").get<std::vector<std::string>>();
  r.confusion = j.at("confusion").get<experiment::ConfusionMatrix>();
  for (const auto& row : j.at("pmi_per_class")) {
    r.pmi.labels.push_back(row.at("class").get<std::string>());
    r.pmi.counts.push_back(row.at("count").get<std::size_t>());
    r.pmi.part.push_back(row.at("pmi").get<double>());
    r.pmi.mean_pmi.push_back(row.at("mean_pmi").get<double>());
    r.pmi.surprisal.push_back(row.at("surprisal").get<double>());
  }
  r.provenance = provenance_from_json(j.at("provenance"));
  return r;
}

enum class Format { kJson, kCsv, kText, kPmiCsv, kConfusionCsv };

inline Format parse_format(std::string_view s) {
  if (s == "json") return Format::kJson;
  if (s == "csv") return Format::kCsv;
  if (s == "text" || s == "text-table") return Format::kText;
  if (s == "pmi-csv") return Format::kPmiCsv;
  if (s == "confusion-csv") return Format::kConfusionCsv;
  throw UnsupportedFormat("unsupported report format '" + std::string(s) + "'");
}

namespace detail {
inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
}  // namespace detail

inline std::string emit(const MeasureReport& r, Format format) {
  std::ostringstream out;
  out.precision(17);
  switch (format) {
    case Format::kJson:
      return to_json(r).dump(2) + "\n";

    case Format::kCsv:
      out << "measure,value,unit,normalizer\n";
      for (const auto& m : r.measures) out << m.name << ',' << m.value << ',' << m.unit << ",\n";
      out << "NMI(C;W|G)," << r.nmi_cw_g << ",ratio,H(C|G)\n";
      out << "NMI(C;E|G)," << r.nmi_ce_g << ",ratio,H(C|G)\n";
      out << "NMI(C;E;W|G)," << r.nmi_cew_g << ",ratio,H(C|G)\n";
      out << "NMI(E;W|G)," << r.nmi_ew_g << ",ratio,H(E|G)\n";
      for (const auto& [model, acc] : r.accuracies) out << "accuracy " << model << ',' << acc << ",ratio,\n";
      for (const auto& [target, acc] : r.baselines) out << "baseline " << target << ',' << acc << ",ratio,\n";
      return out.str();

    case Format::kPmiCsv:
      out << "class,count,pmi,mean_pmi,surprisal\n";
      for (std::size_t c = 0; c < r.pmi.labels.size(); ++c) {
        out << r.pmi.labels[c] << ',' << r.pmi.counts[c] << ',' << r.pmi.part[c] << ','
            << r.pmi.mean_pmi[c] << ',' << r.pmi.surprisal[c] << '\n';
      }
      return out.str();

    case Format::kConfusionCsv:
      return experiment::confusion_to_csv(r.labels, r.confusion);

    case Format::kText: {
      const std::string task = r.task == Task::kType ? "TYPE" : "ALLO.";
      auto row = [&](const std::string& name, double v) {
        std::string padded = name;
        padded.resize(std::max<std::size_t>(padded.size(), 16), ' ');
        out << padded << "  " << detail::fixed2(v) << '\n';
      };
      out << "Task: " << to_string(r.task) << "   dataset " << r.provenance.dataset_hash << "\n\n";
      out << "Measure           " << task << '\n';
      row("H(C|G)", r.entropy_c_given_g);
      row("NMI(C;W|G)", r.nmi_cw_g);
      row("NMI(C;E|G)", r.nmi_ce_g);
      row("NMI(C;E;W|G)", r.nmi_cew_g);
      row("NMI(E;W|G)", r.nmi_ew_g);
      out << "\nTarget      Model           Accuracy\n";
      auto acc = [&](const std::string& target, const std::string& model, double v) {
        std::string t = target, m = model;
        t.resize(std::max<std::size_t>(t.size(), 10), ' ');
        m.resize(std::max<std::size_t>(m.size(), 14), ' ');
        out << t << "  " << m << "  " << detail::fixed2(v) << '\n';
      };
      acc("Etym. (E)", "MI(E;W|G)", r.accuracies.at("MI(E;W|G)"));
      acc("", "Baseline", r.baselines.at("etymology"));
      const std::string target = r.task == Task::kType ? "Type (C)" : "Allomorph";
      acc(target, "MI(C;W|G)", r.accuracies.at("MI(C;W|G)"));
      acc("", "MI(C;E;W|G)", r.accuracies.at("MI(C;E;W|G)"));
      acc("", "Baseline", r.baselines.at(std::string(to_string(r.task))));
      return out.str();
    }
  }
  throw UnsupportedFormat("unsupported report format");
}

}  // namespace morphinfo::report
