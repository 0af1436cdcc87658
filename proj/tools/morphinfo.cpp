// morphinfo: command-line driver for lexicon validation, distribution
// statistics, model training, cross-validated estimation and reporting.
//
// Exit status: 0 success, 1 dataset validation failure, 2 runtime error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "morphinfo/experiment.hpp"
#include "morphinfo/hash.hpp"
#include "morphinfo/infotheory.hpp"
#include "morphinfo/lexicon.hpp"
#include "morphinfo/neural.hpp"
#include "morphinfo/pipeline.hpp"
#include "morphinfo/report.hpp"
#include "morphinfo/synthetic.hpp"
#include "morphinfo/testing/oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace morphinfo;

namespace {

struct Args {
  std::string dataset;
  std::string task = "allomorph";
  bool with_etymology = false;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::size_t inner_k = 3;
  std::size_t min_count = 20;
  std::string config_path;
  std::string out;
  std::size_t jobs = default_jobs();
  std::string format = "text";
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return parse_lexicon(in);
}

// JSON object, or key=value lines (hidden_dims as a comma-separated list).
nn::ModelConfig load_config(const std::string& path) {
  nn::ModelConfig cfg;
  if (path.empty()) return cfg;
  const auto text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json::parse(text).get_to(cfg);
  } else {
    json j = json::object();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error("config line without '=': " + line);
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key == "hidden_dims") {
        std::vector<std::size_t> dims;
        std::istringstream vs(value);
        std::string part;
        while (std::getline(vs, part, ',')) dims.push_back(std::stoul(trim(part)));
        j[key] = dims;
      } else if (key == "learning_rate") {
        j[key] = std::stod(value);
      } else {
        j[key] = std::stoull(value);
      }
    }
    j.get_to(cfg);
  }
  cfg.validate();
  return cfg;
}

Task task_of(const Args& a) {
  const auto t = parse_task(a.task);
  if (!t) throw Error("unknown task '" + a.task + "'");
  return *t;
}

fs::path output_dir(const Args& a) {
  if (a.out.empty()) return {};
  fs::create_directories(a.out);
  return fs::path(a.out);
}

json args_json(const Args& a, const std::string& command) {
  return {{"command", command}, {"dataset", a.dataset},     {"task", a.task},
          {"with_etymology", a.with_etymology},             {"k", a.k},
          {"seed", a.seed},     {"budget", a.budget},       {"inner_k", a.inner_k},
          {"min_count", a.min_count}, {"config", a.config_path}};
}

void write_manifest(const fs::path& dir, const Args& a, const std::string& command,
                    const std::string& hash, const std::vector<std::string>& outputs) {
  if (dir.empty()) return;
  json m = {{"tool", "morphinfo"},
            {"manifest_version", 1},
            {"arguments", args_json(a, command)},
            {"dataset_hash", hash},
            {"outputs", outputs}};
  write_file(dir / "run_manifest.json", m.dump(2) + "\n");
}

pipeline::Options pipeline_options(const Args& a) {
  pipeline::Options o;
  o.task = task_of(a);
  if (o.task == Task::kEtymology) throw Error("report/estimate need --task type or allomorph");
  o.k = a.k;
  o.seed = a.seed;
  o.min_count = a.min_count;
  o.config = load_config(a.config_path);
  o.budget = a.budget;
  o.inner_k = a.inner_k;
  o.jobs = a.jobs;
  o.dataset_path = a.dataset;
  return o;
}

// ---------------------------------------------------------------------------

int cmd_validate(const Args& a) {
  const auto lex = load_lexicon(a.dataset);
  const auto pruned = prune_classes(lex, a.min_count);
  auto classes = [](const Lexicon& l) {
    std::set<std::string> s;
    for (const auto& e : l.entries) s.insert(e.allomorph_class);
    return s.size();
  };
  json r = {{"valid", true},
            {"dataset_hash", dataset_hash(lex)},
            {"rows", lex.entries.size()},
            {"lexemes", lex.lexeme_count()},
            {"alphabet_size", lex.alphabet.size()},
            {"allomorph_classes", classes(lex)},
            {"min_count", a.min_count},
            {"rows_after_pruning", pruned.entries.size()},
            {"lexemes_after_pruning", pruned.lexeme_count()},
            {"allomorph_classes_after_pruning", classes(pruned)},
            {"instances_after_pruning",
             {{"allomorph", build_instances(pruned, Task::kAllomorph).size()},
              {"type", build_instances(pruned, Task::kType).size()},
              {"etymology", build_instances(pruned, Task::kEtymology).size()}}}};
  std::cout << r.dump(2) << "\n";
  const auto dir = output_dir(a);
  if (!dir.empty()) {
    write_file(dir / "validation.json", r.dump(2) + "\n");
    write_manifest(dir, a, "validate", dataset_hash(lex), {"validation.json"});
  }
  return 0;
}

int cmd_stats(const Args& a) {
  const auto lex = prune_classes(load_lexicon(a.dataset), a.min_count);
  const auto table = distribution_table(lex);
  std::cout << to_csv(table);
  const auto dir = output_dir(a);
  if (!dir.empty()) {
    write_file(dir / "origin_by_etymology.csv", to_csv(table));
    write_file(dir / "origin_by_etymology.json", to_json(table).dump(2) + "\n");
    write_manifest(dir, a, "stats", dataset_hash(lex), {"origin_by_etymology.csv", "origin_by_etymology.json"});
  }
  return 0;
}

int cmd_train(const Args& a) {
  if (a.out.empty()) throw Error("train needs --out");
  const auto raw = load_lexicon(a.dataset);
  const auto set = build_instances(prune_classes(raw, a.min_count), task_of(a));
  auto cfg = load_config(a.config_path);
  cfg.seed = a.seed;
  json trials = nullptr;
  if (a.budget > 0) {
    experiment::SearchSpace space;
    space.budget = a.budget;
    space.seed = a.seed;
    const auto found = experiment::search(space, set, a.k, {a.with_etymology, a.jobs});
    trials = experiment::to_json(found);
    cfg = found.best;
  }
  auto model = nn::initialize(cfg, nn::Vocabulary::build(set));
  const auto losses = nn::train(model, set, a.with_etymology);
  std::cerr << "trained " << losses.size() << " epochs, final training loss " << losses.back()
            << " bits\n";
  const auto dir = output_dir(a);
  std::vector<std::string> outputs{"checkpoint.json", "trials.json"};
  auto ck = nn::checkpoint_to_json(model);
  ck["task"] = a.task;
  ck["include_etymology"] = a.with_etymology;
  ck["dataset_hash"] = dataset_hash(raw);
  write_file(dir / "checkpoint.json", ck.dump() + "\n");
  json log = {{"config", cfg}, {"training_loss", losses}, {"search", trials}};
  write_file(dir / "trials.json", log.dump(2) + "\n");
  write_manifest(dir, a, "train", dataset_hash(raw), outputs);
  return 0;
}

int cmd_estimate(const Args& a) {
  const auto opt = pipeline_options(a);
  const auto d = pipeline::prepare(load_lexicon(a.dataset), opt.task, opt.min_count);
  const auto e = pipeline::estimate(d, opt);
  const auto dir = output_dir(a);
  for (const auto& [name, ev] : {std::pair{"C|W,G", &e.cw}, {"C|W,E,G", &e.cew}, {"E|W,G", &e.ew}}) {
    std::cout << "H(" << name << ") <= " << ev->eval.cross_entropy_bits << " bits, accuracy "
              << ev->eval.accuracy << "\n";
  }
  if (!dir.empty()) {
    write_file(dir / "eval_cw.json", experiment::to_json(e.cw.eval).dump(2) + "\n");
    write_file(dir / "eval_cew.json", experiment::to_json(e.cew.eval).dump(2) + "\n");
    write_file(dir / "eval_ew.json", experiment::to_json(e.ew.eval).dump(2) + "\n");
    write_file(dir / "confusion_cw.csv", experiment::confusion_to_csv(e.cw.eval.labels, e.cw.eval.confusion));
    write_file(dir / "confusion_cew.csv", experiment::confusion_to_csv(e.cew.eval.labels, e.cew.eval.confusion));
    write_file(dir / "confusion_ew.csv", experiment::confusion_to_csv(e.ew.eval.labels, e.ew.eval.confusion));
    json searches = json::array();
    for (const auto& s : e.searches) searches.push_back(experiment::to_json(s));
    write_file(dir / "searches.json", searches.dump(2) + "\n");
    write_manifest(dir, a, "estimate", d.hash,
                   {"eval_cw.json", "eval_cew.json", "eval_ew.json", "confusion_cw.csv",
                    "confusion_cew.csv", "confusion_ew.csv", "searches.json"});
  }
  return 0;
}

int cmd_report(const Args& a) {
  const auto format = report::parse_format(a.format);
  const auto opt = pipeline_options(a);
  const auto rep = pipeline::run(load_lexicon(a.dataset), opt);
  std::cout << report::emit(rep, format);
  const auto dir = output_dir(a);
  if (!dir.empty()) {
    write_file(dir / "report.json", report::emit(rep, report::Format::kJson));
    write_file(dir / "report.csv", report::emit(rep, report::Format::kCsv));
    write_file(dir / "report.txt", report::emit(rep, report::Format::kText));
    write_file(dir / "pmi.csv", report::emit(rep, report::Format::kPmiCsv));
    write_file(dir / "confusion.csv", report::emit(rep, report::Format::kConfusionCsv));
    write_manifest(dir, a, "report", rep.provenance.dataset_hash,
                   {"report.json", "report.csv", "report.txt", "pmi.csv", "confusion.csv"});
  }
  return 0;
}

// Quick brute-force suites: plug-in estimators vs direct summation, and
// analytic vs finite-difference gradients.
int cmd_oracle_check(const Args& a) {
  bool all_ok = true;
  auto line = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
    all_ok = all_ok && ok;
  };

  {
    Rng rng(derive_seed(a.seed, 1));
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
      worst = std::max({worst,
                        std::abs(joint.joint_entropy({"A"}) - oracle::entropy(samples, 0)),
                        std::abs(info::conditional_entropy(joint, "A", {"G"}) -
                                 oracle::conditional_entropy(samples, 0, {2})),
                        std::abs(info::mutual_information(joint, "A", "B", {"G"}) -
                                 oracle::mutual_information(samples, 0, 1, {2}))});
    }
    std::ostringstream d;
    d << "max |plug-in - brute force| = " << worst << " bits over 200 joints";
    line("plugin-vs-bruteforce", worst <= 1e-9, d.str());
  }
  {
    Rng rng(derive_seed(a.seed, 2));
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      nn::ModelConfig cfg;
      cfg.char_embedding_dim = 1 + rng.below(5);
      cfg.hidden_dims = {1 + rng.below(8)};
      if (rng.below(2)) cfg.hidden_dims.push_back(1 + rng.below(8));
      cfg.gender_embedding_dim = cfg.hidden_dims.front();
      cfg.seed = rng.next_u64();
      auto set = synthetic::last_symbol_task(8, 3, rng.next_u64());
      auto model = nn::initialize(cfg, nn::Vocabulary::build(set));
      auto inst = set.instances[0];
      inst.form_symbols.resize(std::min<std::size_t>(inst.form_symbols.size(), 6));
      worst = std::max(worst, nn::gradient_check(model, inst, rng.below(2) == 1, 1e-4).max_relative_error);
    }
    std::ostringstream d;
    d << "max relative error = " << worst << " over 10 random models";
    line("gradient-check", worst < 1e-4, d.str());
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information-theoretic analysis of inflection-class predictability"};
  app.require_subcommand(1);
  Args a;

  auto add_dataset = [&](CLI::App* sub) {
    sub->add_option("--dataset", a.dataset, "Lexicon TSV")->required()->check(CLI::ExistingFile);
  };
  auto add_common = [&](CLI::App* sub, bool seed_required) {
    add_dataset(sub);
    sub->add_option("--task", a.task, "type | allomorph | etymology")
        ->check(CLI::IsMember({"type", "allomorph", "etymology"}));
    sub->add_option("--k", a.k, "Cross-validation folds")->check(CLI::Range(2, 1000));
    auto* seed = sub->add_option("--seed", a.seed, "Master seed");
    if (seed_required) seed->required();
    sub->add_option("--budget", a.budget, "Random-search trials (0: use the config as is)");
    sub->add_option("--inner-k", a.inner_k, "Inner folds for nested search")->check(CLI::Range(2, 100));
    sub->add_option("--config", a.config_path, "Model config (JSON or key=value)")->check(CLI::ExistingFile);
    sub->add_option("--min-count", a.min_count, "Drop classes with fewer lexemes")->check(CLI::PositiveNumber);
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);
  };

  auto* validate = app.add_subcommand("validate", "Check a lexicon TSV against the schema");
  add_dataset(validate);
  validate->add_option("--min-count", a.min_count)->check(CLI::PositiveNumber);
  validate->add_option("--out", a.out);

  auto* stats = app.add_subcommand("stats", "Allomorph origin by lexeme etymology (CSV/JSON)");
  add_dataset(stats);
  stats->add_option("--min-count", a.min_count, "Drop classes with fewer lexemes (default 1: none)")
      ->check(CLI::PositiveNumber);
  stats->add_option("--out", a.out);

  auto* train = app.add_subcommand("train", "Train one classifier; write checkpoint and trial log");
  add_common(train, true);
  train->add_flag("--with-etymology", a.with_etymology, "Append the etymology symbol to each form");

  auto* estimate = app.add_subcommand("estimate", "Cross-validated evaluation of all model variants");
  add_common(estimate, true);

  auto* rep = app.add_subcommand("report", "Full measure report");
  add_common(rep, true);
  rep->add_option("--format", a.format, "Stdout format: text | json | csv | pmi-csv | confusion-csv");

  auto* oracle = app.add_subcommand("oracle-check", "Run brute-force oracle suites");
  oracle->add_option("--seed", a.seed);

  // stats reports the unpruned table unless asked otherwise.
  stats->preparse_callback([&](std::size_t) { a.min_count = 1; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*validate) return cmd_validate(a);
    if (*stats) return cmd_stats(a);
    if (*train) return cmd_train(a);
    if (*estimate) return cmd_estimate(a);
    if (*rep) return cmd_report(a);
    if (*oracle) return cmd_oracle_check(a);
  } catch (const ValidationError& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
