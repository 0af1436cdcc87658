// Acceptance gate. One PASS/FAIL line per criterion; exit status is the
// number of failures.
//
// Set MORPHINFO_DATASET to the full lexicon TSV to run the real-data check;
// otherwise the bundled synthetic fixture stands in for it.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "morphinfo/experiment.hpp"
#include "morphinfo/infotheory.hpp"
#include "morphinfo/lexicon.hpp"
#include "morphinfo/neural.hpp"
#include "morphinfo/pipeline.hpp"
#include "morphinfo/synthetic.hpp"
#include "morphinfo/testing/oracles.hpp"

namespace fs = std::filesystem;
using namespace morphinfo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(0xACCE0001);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t na = 1 + rng.below(5), nb = 1 + rng.below(5), ng = 1 + rng.below(5);
    const std::size_t n = 1 + rng.below(500);
    info::JointTable joint({{"A", na}, {"B", nb}, {"G", ng}});
    std::vector<oracle::Sample> samples;
    for (std::size_t i = 0; i < n; ++i) {
      oracle::Sample s{rng.below(na), rng.below(nb), rng.below(ng)};
      joint.add(s);
      samples.push_back(s);
    }
    worst = std::max({worst, std::abs(joint.joint_entropy({"A"}) - oracle::entropy(samples, 0)),
                      std::abs(info::conditional_entropy(joint, "A", {"G"}) -
                               oracle::conditional_entropy(samples, 0, {2})),
                      std::abs(info::conditional_entropy(joint, "A", {"B", "G"}) -
                               oracle::conditional_entropy(samples, 0, {1, 2})),
                      std::abs(info::mutual_information(joint, "A", "B", {"G"}) -
                               oracle::mutual_information(samples, 0, 1, {2})),
                      std::abs(info::mutual_information(joint, "A", "B", {}) -
                               oracle::mutual_information(samples, 0, 1, {}))});
  }
  const double secs = seconds_since(t0);
  o.detail << "200 joints, max deviation " << worst << " bits, " << fmt(secs, 2) << " s";
  o.require(worst <= 1e-9, "deviation <= 1e-9");
  o.require(secs < 10.0, "runtime < 10 s");
  return o;
}

Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(0xACCE0002);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    nn::ModelConfig cfg;
    cfg.char_embedding_dim = 1 + rng.below(6);
    cfg.hidden_dims = {1 + rng.below(8)};
    if (rng.below(2)) cfg.hidden_dims.push_back(1 + rng.below(8));
    cfg.gender_embedding_dim = cfg.hidden_dims.front();
    cfg.seed = rng.next_u64();
    const auto set = synthetic::last_symbol_task(10, 2 + rng.below(6), rng.next_u64());
    const auto model = nn::initialize(cfg, nn::Vocabulary::build(set));
    auto inst = set.instances[rng.below(set.size())];
    const bool etym = rng.below(2) == 1;
    inst.form_symbols.resize(std::min<std::size_t>(inst.form_symbols.size(), etym ? 5 : 6));
    worst = std::max(worst, nn::gradient_check(model, inst, etym, 1e-4).max_relative_error);
  }
  const double secs = seconds_since(t0);
  o.detail << "50 models, max relative error " << worst << ", " << fmt(secs, 2) << " s";
  o.require(worst < 1e-4, "relative error < 1e-4");
  o.require(secs < 60.0, "runtime < 60 s");
  return o;
}

Outcome upper_bound_property() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto cv = synthetic::closed_vocabulary_task(50, 200, 4, 0xACCE0003);

  std::vector<oracle::Sample> samples;
  std::map<std::vector<std::string>, std::size_t> form_index;
  for (const auto& inst : cv.set.instances) {
    const auto w = form_index.emplace(inst.form_symbols, form_index.size()).first->second;
    samples.push_back({inst.label, w, static_cast<std::size_t>(inst.gender)});
  }
  const double plugin = oracle::conditional_entropy(samples, 0, {1, 2});
  double generating = 0.0;
  for (const auto& p : cv.class_probs) {
    for (double x : p) generating -= x * std::log2(x) / static_cast<double>(cv.class_probs.size());
  }

  struct Variant {
    std::string name;
    std::size_t char_dim, hidden, epochs, batch;
    double lr;
  };
  const std::vector<Variant> variants{{"undertrained", 4, 4, 1, 64, 1e-3},
                                      {"small", 8, 8, 5, 32, 5e-3},
                                      {"overfit-prone", 24, 32, 25, 8, 3e-2},
                                      {"well-trained", 16, 32, 15, 32, 1e-2}};
  const auto plan = experiment::make_folds(cv.set, 5, 0xACCE0003);
  double best = std::numeric_limits<double>::infinity();
  double lowest = std::numeric_limits<double>::infinity();
  o.detail << "plug-in H(C|W,G) " << fmt(plugin) << " (generating " << fmt(generating) << "); CE";
  for (const auto& v : variants) {
    nn::ModelConfig cfg;
    cfg.char_embedding_dim = v.char_dim;
    cfg.hidden_dims = {v.hidden};
    cfg.gender_embedding_dim = v.hidden;
    cfg.epochs = v.epochs;
    cfg.batch_size = v.batch;
    cfg.learning_rate = v.lr;
    cfg.seed = 0xACCE0003;
    const auto r = experiment::run_cv(cv.set, cfg, plan, {false, default_jobs()});
    o.detail << " " << v.name << "=" << fmt(r.cross_entropy_bits);
    best = std::min(best, r.cross_entropy_bits);
    lowest = std::min(lowest, r.cross_entropy_bits);
  }
  const double secs = seconds_since(t0);
  o.detail << ", " << fmt(secs, 1) << " s";
  o.require(lowest >= plugin - 0.02, "every CE >= H - 0.02");
  o.require(best <= plugin + 0.1, "best CE within 0.1 of H");
  o.require(secs < 300.0, "runtime < 5 min");
  return o;
}

Outcome learnability_control() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto set = synthetic::last_symbol_task(2000, 8, 0xACCE0004);
  nn::ModelConfig cfg;
  cfg.char_embedding_dim = 16;
  cfg.hidden_dims = {32};
  cfg.gender_embedding_dim = 32;
  cfg.epochs = 25;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 16;
  cfg.seed = 0xACCE0004;
  const auto real = experiment::run_cv(set, cfg, 10, {false, default_jobs()});

  const auto shuffled = synthetic::shuffle_labels(set, 0xACCE0005);
  auto control_cfg = cfg;
  control_cfg.epochs = 10;
  const auto control = experiment::run_cv(shuffled, control_cfg, 10, {false, default_jobs()});
  const double baseline = experiment::majority_baseline(shuffled);
  const double h_cg = info::conditional_entropy(info::joint_from_instances(shuffled), "C", {"G"});

  o.detail << "accuracy " << fmt(real.accuracy) << ", CE " << fmt(real.cross_entropy_bits)
           << " bits; shuffled accuracy " << fmt(control.accuracy) << " vs baseline " << fmt(baseline)
           << ", shuffled CE " << fmt(control.cross_entropy_bits) << " vs H(C|G) " << fmt(h_cg) << ", "
           << fmt(seconds_since(t0), 1) << " s";
  o.require(real.accuracy > 0.99, "accuracy > 0.99");
  o.require(real.cross_entropy_bits < 0.05, "CE < 0.05");
  o.require(std::abs(control.accuracy - baseline) <= 0.03, "shuffled accuracy within 0.03 of baseline");
  o.require(control.cross_entropy_bits >= h_cg - 0.05, "shuffled CE >= H(C|G) - 0.05");
  return o;
}

// ---------------------------------------------------------------------------
// Dataset criterion.

// Raw-text view of a lexicon: rows of (lexeme key, gender, etymology,
// allomorph, type), pruned by distinct lexemes per allomorph.
struct RawRow {
  std::string lexeme, gender, etymology, allomorph, type;
};

std::vector<RawRow> raw_rows(const std::string& tsv, std::size_t min_count) {
  std::vector<RawRow> rows;
  std::istringstream in(tsv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, '\t')) f.push_back(field);
    const auto etym = f[3] == "semitic" ? "semitic" : "non-semitic";
    rows.push_back({f[0] + "/" + f[2] + "/" + etym, f[2], etym, f[4], f[5]});
  }
  std::map<std::string, std::set<std::string>> lexemes;
  for (const auto& r : rows) lexemes[r.allomorph].insert(r.lexeme);
  std::vector<RawRow> kept;
  for (const auto& r : rows) {
    if (lexemes[r.allomorph].size() >= min_count) kept.push_back(r);
  }
  return kept;
}

struct OracleTask {
  double h_c_given_g = 0.0;
  double baseline = 0.0;
};

// target: "allomorph" (every row), "type" (distinct lexeme/type pairs) or
// "etymology" (distinct lexemes).
OracleTask oracle_task(const std::vector<RawRow>& rows, const std::string& target) {
  std::set<std::string> seen;
  std::map<std::string, std::size_t> ids;
  std::vector<oracle::Sample> samples;
  std::vector<std::string> labels;
  for (const auto& r : rows) {
    std::string label;
    if (target == "allomorph") {
      label = r.allomorph;
    } else if (target == "type") {
      if (!seen.insert(r.lexeme + "#" + r.type).second) continue;
      label = r.type;
    } else {
      if (!seen.insert(r.lexeme).second) continue;
      label = r.etymology;
    }
    const auto c = ids.emplace(label, ids.size()).first->second;
    samples.push_back({c, r.gender == "m" ? 0u : 1u});
    labels.push_back(label);
  }
  return {oracle::conditional_entropy(samples, 0, {1}), oracle::majority(labels)};
}

pipeline::Options dataset_options(Task task, const std::string& path, bool full) {
  pipeline::Options o;
  o.task = task;
  o.k = 10;
  o.seed = 1729;
  o.min_count = 20;
  o.jobs = default_jobs();
  o.dataset_path = path;
  if (!full) {
    o.config.char_embedding_dim = 16;
    o.config.hidden_dims = {32};
    o.config.gender_embedding_dim = 32;
    o.config.epochs = 30;
    o.config.learning_rate = 1e-2;
    o.config.batch_size = 16;
  }
  return o;
}

Outcome dataset_criterion(const std::string& path, bool real) {
  Outcome o;
  const auto t0 = Clock::now();
  const auto text = slurp(path);
  const auto raw = parse_lexicon(text);

  if (!real) {
    o.require(write_lexicon(synthetic::maltese_shaped_lexicon(synthetic::kFixtureSeed,
                                                              synthetic::kFixtureEntries)) == text,
              "fixture regenerates from seed 1729");
  }

  // Origin-by-etymology table against counts taken straight from the text.
  const auto table = distribution_table(raw);
  const auto counted = oracle::count_origins(text);
  const std::pair<AllomorphOrigin, const char*> origins[] = {
      {AllomorphOrigin::kNonSemiticAffix, "non-semitic-affix"},
      {AllomorphOrigin::kSemiticAffix, "semitic-affix"},
      {AllomorphOrigin::kSemiticTemplate, "semitic-template"}};
  std::vector<std::size_t> cells;
  bool table_ok = true;
  for (const auto& [origin, name] : origins) {
    for (const auto& [etym, col] : {std::pair{Etymology::kNonSemitic, "non-semitic"}, {Etymology::kSemitic, "semitic"}}) {
      const auto row = counted.cells.find(name);
      const std::size_t want = row == counted.cells.end() || !row->second.count(col) ? 0 : row->second.at(col);
      cells.push_back(table.at(origin, etym));
      table_ok = table_ok && table.at(origin, etym) == want;
    }
  }
  o.require(table_ok, "origin table matches raw counts");
  o.detail << "origin table " << cells[0] << "/" << cells[1] << "/" << cells[2] << "/" << cells[3] << "/" << cells[4]
           << "/" << cells[5];
  if (real) {
    o.require(cells == std::vector<std::size_t>{1274, 21, 416, 684, 240, 537}, "origin table = published counts");
  }

  const auto rows = raw_rows(text, 20);
  const auto want_allo = oracle_task(rows, "allomorph");
  const auto want_type = oracle_task(rows, "type");
  const auto want_etym = oracle_task(rows, "etymology");

  const auto allo = pipeline::run(raw, dataset_options(Task::kAllomorph, path, real));
  const auto type = pipeline::run(raw, dataset_options(Task::kType, path, real));

  o.detail << "; H(C|G) type " << fmt(type.entropy_c_given_g) << " allo " << fmt(allo.entropy_c_given_g);
  o.require(std::abs(allo.entropy_c_given_g - want_allo.h_c_given_g) <= 1e-9, "allomorph H(C|G) = oracle");
  o.require(std::abs(type.entropy_c_given_g - want_type.h_c_given_g) <= 1e-9, "type H(C|G) = oracle");
  o.require(std::abs(allo.measure("H(E|G)").value - want_etym.h_c_given_g) <= 1e-9, "H(E|G) = oracle");
  o.require(allo.baselines.at("allomorph") == want_allo.baseline, "allomorph baseline = oracle");
  o.require(type.baselines.at("type") == want_type.baseline, "type baseline = oracle");
  o.require(allo.baselines.at("etymology") == want_etym.baseline, "etymology baseline = oracle");

  o.detail << "; baselines " << fmt(allo.baselines.at("allomorph"), 2) << "/" << fmt(type.baselines.at("type"), 2)
           << "/" << fmt(allo.baselines.at("etymology"), 2);
  o.detail << "; acc " << fmt(allo.accuracies.at("MI(C;W|G)"), 2) << "/"
           << fmt(allo.accuracies.at("MI(C;E;W|G)"), 2) << "/" << fmt(type.accuracies.at("MI(C;W|G)"), 2) << "/"
           << fmt(type.accuracies.at("MI(C;E;W|G)"), 2) << "/" << fmt(allo.accuracies.at("MI(E;W|G)"), 2);
  auto battery = [](const report::MeasureReport& r) {
    return std::vector<double>{r.nmi_cw_g, r.nmi_ce_g, r.nmi_cew_g, r.nmi_ew_g};
  };
  o.detail << "; NMI allo";
  for (double v : battery(allo)) o.detail << " " << fmt(v, 2);
  o.detail << " type";
  for (double v : battery(type)) o.detail << " " << fmt(v, 2);

  for (const auto* r : {&allo, &type}) {
    o.require(std::abs(r->pmi.total() - r->measure("MI(C;W|G)").value) <= 1e-9, "PMI parts sum to MI");
    o.require(r->nmi_cew_g <= std::min(r->nmi_cw_g, r->nmi_ce_g) + 0.02, "tripartite <= min + 0.02");
    for (const auto& [name, acc] : r->accuracies) o.require(acc >= 0.0 && acc <= 1.0, "accuracy range");
  }

  if (real) {
    auto near = [&](double got, double want, double tol, const std::string& what) {
      o.require(std::abs(got - want) <= tol, what + " " + fmt(got, 3) + " vs " + fmt(want, 2));
    };
    near(type.entropy_c_given_g, 0.81, 0.02, "type H(C|G)");
    near(allo.entropy_c_given_g, 2.65, 0.02, "allomorph H(C|G)");
    near(allo.accuracies.at("MI(C;W|G)"), 0.65, 0.05, "allomorph MI(C;W|G) accuracy");
    near(allo.accuracies.at("MI(C;E;W|G)"), 0.68, 0.05, "allomorph MI(C;E;W|G) accuracy");
    near(type.accuracies.at("MI(C;W|G)"), 0.80, 0.05, "type MI(C;W|G) accuracy");
    near(type.accuracies.at("MI(C;E;W|G)"), 0.81, 0.05, "type MI(C;E;W|G) accuracy");
    near(allo.accuracies.at("MI(E;W|G)"), 0.90, 0.05, "etymology accuracy");
    near(allo.baselines.at("allomorph"), 0.40, 0.005, "allomorph baseline");
    near(type.baselines.at("type"), 0.77, 0.005, "type baseline");
    near(allo.baselines.at("etymology"), 0.62, 0.005, "etymology baseline");
    const std::vector<double> published_allo{0.42, 0.22, 0.15, 0.61}, published_type{0.21, 0.13, 0.06, 0.61};
    for (std::size_t i = 0; i < 4; ++i) {
      near(battery(allo)[i], published_allo[i], 0.05, "allomorph NMI #" + std::to_string(i + 1));
      near(battery(type)[i], published_type[i], 0.05, "type NMI #" + std::to_string(i + 1));
    }
    for (const auto* r : {&allo, &type}) {
      o.require(r->nmi_cw_g > r->nmi_ce_g && r->nmi_ce_g > r->nmi_cew_g, "phonology > etymology > tripartite");
    }
    for (std::size_t i = 0; i < 3; ++i) {
      o.require(battery(allo)[i] >= 1.5 * battery(type)[i], "allomorph NMI >= 1.5x type NMI");
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "; " << fmt(secs, 1) << " s";
  o.require(secs < 7200.0, "runtime < 2 h");
  return o;
}

Outcome report_determinism() {
  Outcome o;
  const auto dir = fs::temp_directory_path() / "morphinfo_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({"char_embedding_dim":16,"hidden_dims":[24],"epochs":6,)"
                                        R"("learning_rate":0.01,"batch_size":16})";
  std::string outputs[2];
  for (int run = 0; run < 2; ++run) {
    const auto out = dir / ("run" + std::to_string(run));
    const std::string cmd = std::string(MORPHINFO_CLI) + " report --dataset " + MORPHINFO_FIXTURE +
                            " --seed 42 --k 5 --config " + (dir / "config.json").string() + " --jobs " +
                            std::to_string(run + 1) + " --out " + out.string() + " >/dev/null";
    const int status = std::system(cmd.c_str());
    o.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, "report run " + std::to_string(run) + " exit 0");
    outputs[run] = slurp(out / "report.json");
  }
  o.require(!outputs[0].empty(), "report.json written");
  o.require(outputs[0] == outputs[1], "byte-identical report.json");
  o.detail << "two report runs (jobs 1 and 2), " << outputs[0].size() << " bytes each, "
           << (outputs[0] == outputs[1] ? "identical" : "different");
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  const char* env = std::getenv("MORPHINFO_DATASET");
  const bool real = env != nullptr && fs::exists(env);
  const std::string dataset = real ? env : MORPHINFO_FIXTURE;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 oracle equivalence", oracle_equivalence},
      {"2 gradient correctness", gradient_correctness},
      {"3 upper-bound property", upper_bound_property},
      {"4 learnability control", learnability_control},
      {real ? "5 dataset reproduction" : "5 dataset reproduction (synthetic fixture substitute)",
       [&] { return dataset_criterion(dataset, real); }},
      {"6 report determinism", report_determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << "criterion " << name << ": " << o.detail.str() << std::endl;
  }
  return failures;
}
