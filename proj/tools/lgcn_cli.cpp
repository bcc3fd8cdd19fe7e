// lgcn: command-line front end.
//
//   lgcn synth       write a two-cluster synthetic dataset
//   lgcn train       train one model on one split
//   lgcn experiment  cross-validation, label-budget sweep or ablation
//   lgcn gradcheck   finite-difference check of the analytic gradients
//   lgcn eval        score a checkpoint on a dataset
//
// Exit codes: 0 success, 1 validation error, 2 numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lgcn/lgcn.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

// ---- flat key=value config ----

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lgcn::ValidationError("cannot open config '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = lgcn::io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw lgcn::ValidationError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = lgcn::io::trim(line.substr(0, eq));
    std::ranges::replace(key, '_', '-');
    kv[key] = lgcn::io::trim(line.substr(eq + 1));
  }
  return kv;
}

std::string long_name(const CLI::Option* opt) {
  const auto& names = opt->get_lnames();
  return names.empty() ? std::string() : names.front();
}

/// Appends "--key=value" for every config entry whose flag was not given on the
/// command line, so flags win over the file and the file wins over defaults.
std::vector<std::string> merge_config(const CLI::App& sub, const std::map<std::string, std::string>& kv,
                                      std::vector<std::string> args) {
  std::map<std::string, const CLI::Option*> options;
  for (const CLI::Option* opt : sub.get_options()) {
    const auto name = long_name(opt);
    if (!name.empty() && name != "config" && name != "help") options[name] = opt;
  }
  for (const auto& [key, value] : kv) {
    if (!options.contains(key)) {
      std::string valid;
      for (const auto& [name, opt] : options) valid += (valid.empty() ? "" : ", ") + name;
      throw lgcn::ValidationError("unknown config key '" + key + "' for '" + sub.get_name() +
                                  "'; valid keys: " + valid);
    }
  }
  for (const auto& [key, value] : kv) {
    if (options.at(key)->count() == 0) args.push_back("--" + key + "=" + value);
  }
  return args;
}

// ---- shared option groups ----

struct TrainFlags {
  lgcn::TrainConfig config;
  std::string variant = "learnable";

  void add(CLI::App& app) {
    app.add_option("--lr", config.learning_rate, "Adam learning rate")->capture_default_str();
    app.add_option("--weight-decay", config.weight_decay, "L2 weight decay added to the gradient")
        ->capture_default_str();
    app.add_option("--gamma", config.gamma, "Frobenius penalty weight on the adjacency")->capture_default_str();
    app.add_option("--epochs", config.epochs, "Full-graph training epochs")->capture_default_str();
    app.add_option("--dropout-keep", config.dropout_keep, "Dropout keep probability")->capture_default_str();
  }
};

struct SynthFlags {
  lgcn::SyntheticSpec spec;

  void add(CLI::App& app) {
    app.add_option("--n-per-class", spec.n_per_class, "Nodes per class")->capture_default_str();
    app.add_option("--dim", spec.dim, "Feature dimension")->capture_default_str();
    app.add_option("--separation", spec.separation, "Distance between the class means")->capture_default_str();
    app.add_option("--stddev", spec.stddev, "Within-class standard deviation")->capture_default_str();
    app.add_option("--offset", spec.offset, "Shared mean offset on every coordinate")->capture_default_str();
  }
};

struct DataFlags {
  std::string features;
  std::string labels;

  void add(CLI::App& app, bool required) {
    auto* f = app.add_option("--features", features, "Feature CSV (N rows x M columns)");
    auto* l = app.add_option("--labels", labels, "Label CSV (node_id,class)");
    if (required) {
      f->required();
      l->required();
    } else {
      f->needs(l);
      l->needs(f);
    }
  }

  lgcn::Dataset load() const { return lgcn::io::read_dataset(features, labels); }
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw lgcn::ValidationError("cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

std::vector<bool> fold_mask(const std::vector<int>& fold_of, int fold) {
  std::vector<bool> m(fold_of.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = fold_of[i] == fold;
  return m;
}

void print_report(const lgcn::EvalReport& r) {
  std::cout << std::setprecision(4) << "auc " << r.auc << "  acc " << r.accuracy << "  sens " << r.sensitivity
            << "  spec " << r.specificity << "  (n=" << r.n_eval << ")\n";
}

// ---- commands ----

struct SynthCmd {
  SynthFlags synth;
  std::uint64_t seed = 0;
  std::string out = ".";

  void add(CLI::App& app) {
    synth.add(app);
    app.add_option("--seed", seed, "Master seed")->capture_default_str();
    app.add_option("--out", out, "Output directory")->capture_default_str();
  }

  int run() {
    synth.spec.seed = seed;
    const auto d = lgcn::generate_synthetic(synth.spec);
    ensure_dir(out);
    lgcn::io::write_features_csv(join(out, "features.csv"), d.features);
    lgcn::io::write_labels_csv(join(out, "labels.csv"), d.labels);
    std::cout << "N=" << d.features.rows() << " M=" << d.features.cols() << " seed=" << seed << "\n";
    return kExitOk;
  }
};

struct TrainCmd {
  DataFlags data;
  TrainFlags train;
  std::size_t budget = 50;
  int folds = 10;
  int fold = 0;
  std::uint64_t seed = 0;
  std::string out = ".";

  void add(CLI::App& app) {
    data.add(app, true);
    train.add(app);
    app.add_option("--variant", train.variant, "learnable | fixed_adjacency")->capture_default_str();
    app.add_option("--budget", budget, "Number of labeled training nodes")->capture_default_str();
    app.add_option("--folds", folds, "Split the nodes into this many folds")->capture_default_str();
    app.add_option("--fold", fold, "Held-out evaluation fold")->capture_default_str();
    app.add_option("--seed", seed, "Master seed")->capture_default_str();
    app.add_option("--out", out, "Output directory")->capture_default_str();
  }

  int run() {
    const auto d = data.load();
    const auto variant = lgcn::parse_variant(train.variant);
    if (fold < 0 || fold >= folds) throw lgcn::ValidationError("--fold must lie in [0, folds)");
    lgcn::ExperimentPlan plan;
    plan.folds = folds;
    plan.train = train.config;
    const std::vector<std::size_t> budgets{budget};
    lgcn::validate_plan(plan, d, budgets);

    const auto split = lgcn::draw_split(d, folds, seed, 0);
    const auto labeled =
        lgcn::sample_labeled(d, split.fold_of, fold, budget, lgcn::derive_seed(seed, {0x1ABu, 0, std::uint64_t(fold)}));
    auto cfg = train.config;
    cfg.seed = lgcn::derive_seed(seed, {0x7A1u, 0, std::uint64_t(fold)});
    const auto result = lgcn::train(d.features, lgcn::training_view(d, labeled), cfg, variant);

    std::optional<lgcn::GraphValues> fixed;
    if (variant == lgcn::Variant::fixed_adjacency) fixed = lgcn::fixed_graph(d.features);
    const auto probs = lgcn::predict(result.params, d.features, fixed ? &*fixed : nullptr);
    const auto report = lgcn::evaluate(probs, lgcn::LabelSet::fully_labeled(d.labels), fold_mask(split.fold_of, fold));

    ensure_dir(out);
    lgcn::io::save_checkpoint(join(out, "checkpoint.json"), result.params);
    lgcn::io::write_loss_csv(join(out, "loss.csv"), result.loss_history);
    lgcn::io::write_json(join(out, "eval.json"), lgcn::to_json(report));
    lgcn::io::write_roc_csv(join(out, "roc.csv"), report.roc_points);
    if (!result.loss_history.empty()) {
      std::cout << "final loss " << result.loss_history.back() << "\n";
    }
    print_report(report);
    return kExitOk;
  }
};

struct ExperimentCmd {
  DataFlags data;
  SynthFlags synth;
  TrainFlags train;
  std::string mode = "cv";
  std::size_t budget = 50;
  std::vector<std::size_t> budgets{50, 200, 600};
  std::vector<std::string> variants{"learnable"};
  std::vector<double> gammas{0.0};
  int folds = 10;
  int repeats = 10;
  int threads = 1;
  std::uint64_t seed = 0;
  std::string out = ".";

  void add(CLI::App& app) {
    data.add(app, false);
    synth.add(app);
    train.add(app);
    app.add_option("--mode", mode, "cv | sweep | ablation")
        ->check(CLI::IsMember({"cv", "sweep", "ablation"}))
        ->capture_default_str();
    app.add_option("--budget", budget, "Label budget (cv, ablation)")->capture_default_str();
    app.add_option("--budgets", budgets, "Comma-separated label budgets (sweep)")->delimiter(',')->capture_default_str();
    app.add_option("--variants", variants, "Comma-separated variants (cv, sweep)")->delimiter(',')->capture_default_str();
    app.add_option("--gammas", gammas, "Comma-separated gamma grid; ablation uses the first positive value")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--folds", folds, "Cross-validation folds")->capture_default_str();
    app.add_option("--repeats", repeats, "Repeated cross-validation rounds")->capture_default_str();
    app.add_option("--threads", threads, "Concurrent training runs")->capture_default_str();
    app.add_option("--seed", seed, "Master seed")->capture_default_str();
    app.add_option("--out", out, "Output directory")->capture_default_str();
  }

  int run() {
    lgcn::Dataset d;
    if (!data.features.empty()) {
      d = data.load();
    } else {
      synth.spec.seed = seed;
      d = lgcn::generate_synthetic(synth.spec);
    }
    lgcn::ExperimentPlan plan;
    plan.label_budget = budget;
    plan.folds = folds;
    plan.repeats = repeats;
    plan.threads = threads;
    plan.master_seed = seed;
    plan.train = train.config;
    plan.gammas = gammas;
    plan.variants.clear();
    for (const auto& v : variants) plan.variants.push_back(lgcn::parse_variant(v));

    lgcn::SweepReport report;
    if (mode == "cv") {
      report = lgcn::run_cross_validation(d, plan);
    } else if (mode == "sweep") {
      report = lgcn::run_label_sweep(d, plan, budgets);
    } else {
      report = lgcn::run_ablation(d, plan);
    }
    ensure_dir(out);
    lgcn::io::write_json(join(out, "report.json"), lgcn::to_json(report));
    lgcn::io::write_text(join(out, "runs.csv"), lgcn::io::runs_csv(report));
    for (const auto& c : report.cells) {
      std::cout << std::setprecision(4) << lgcn::variant_name(c.variant) << " budget " << c.budget << " gamma "
                << c.gamma << ": auc " << c.auc.mean << " +- " << c.auc.std << "  acc " << c.accuracy.mean << " +- "
                << c.accuracy.std << "  (" << c.n_runs << " runs)\n";
    }
    return kExitOk;
  }
};

struct GradcheckCmd {
  double gamma = 0.0;
  std::uint64_t seed = 1;
  long nodes = 6;
  double step = 1e-6;
  double tolerance = 1e-5;
  bool break_backward = false;

  void add(CLI::App& app) {
    app.add_option("--gamma", gamma, "Frobenius penalty weight")->capture_default_str();
    app.add_option("--seed", seed, "Instance seed")->capture_default_str();
    app.add_option("--nodes", nodes, "Number of nodes")->check(CLI::Range(1L, 64L))->capture_default_str();
    app.add_option("--step", step, "Central-difference step")->capture_default_str();
    app.add_option("--tolerance", tolerance, "Maximum accepted relative error")->capture_default_str();
    app.add_flag("--break-backward", break_backward, "Corrupt one backward rule (checker self-test)");
  }

  int run() {
    if (!(gamma >= 0.0)) throw lgcn::ValidationError("--gamma must be >= 0");
    const auto inst = lgcn::make_gradcheck_instance(seed, nodes);
    const auto report = lgcn::gradcheck(inst.params, inst.features, inst.labels, gamma, step, break_backward);
    for (const auto& e : report.entries) {
      std::cout << std::left << std::setw(18) << e.name << std::scientific << std::setprecision(3)
                << " max rel err " << e.max_rel_error << "  max |grad| " << e.max_abs_grad << "\n";
    }
    const bool ok = report.passed(tolerance);
    std::cout << (ok ? "PASS" : "FAIL") << " max relative error " << report.max_rel_error() << " (tolerance "
              << tolerance << ")\n";
    return ok ? kExitOk : kExitNumeric;
  }
};

struct EvalCmd {
  DataFlags data;
  std::string checkpoint;
  int folds = 0;
  int fold = 0;
  std::uint64_t seed = 0;
  std::string out;

  void add(CLI::App& app) {
    data.add(app, true);
    app.add_option("--checkpoint", checkpoint, "Checkpoint written by 'train'")->required();
    app.add_option("--folds", folds, "With --fold, evaluate only that fold of the seeded split (0 = all nodes)")
        ->capture_default_str();
    app.add_option("--fold", fold, "Evaluation fold")->capture_default_str();
    app.add_option("--seed", seed, "Master seed of the split")->capture_default_str();
    app.add_option("--out", out, "Directory for eval.json and roc.csv");
  }

  int run() {
    const auto d = data.load();
    const auto params = lgcn::io::load_checkpoint(checkpoint);
    if (params.feature_dim != d.features.cols()) {
      throw lgcn::ValidationError("checkpoint expects " + std::to_string(params.feature_dim) +
                                  " feature columns, dataset has " + std::to_string(d.features.cols()));
    }
    std::vector<bool> mask(d.labels.size(), true);
    if (folds > 0) {
      if (fold < 0 || fold >= folds) throw lgcn::ValidationError("--fold must lie in [0, folds)");
      mask = fold_mask(lgcn::draw_split(d, folds, seed, 0).fold_of, fold);
    }
    const auto probs = lgcn::predict(params, d.features);
    const auto report = lgcn::evaluate(probs, lgcn::LabelSet::fully_labeled(d.labels), mask);
    if (!out.empty()) {
      ensure_dir(out);
      lgcn::io::write_json(join(out, "eval.json"), lgcn::to_json(report));
      lgcn::io::write_roc_csv(join(out, "roc.csv"), report.roc_points);
    }
    print_report(report);
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  lgcn::configure_allocator();

  CLI::App app{"Graph convolutional network with a learnable cosine adjacency"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Flat key=value file; command-line flags take precedence");

  SynthCmd synth;
  TrainCmd train;
  ExperimentCmd experiment;
  GradcheckCmd gradcheck;
  EvalCmd eval;
  auto* s_synth = app.add_subcommand("synth", "Write a synthetic two-cluster dataset");
  auto* s_train = app.add_subcommand("train", "Train one model on one split");
  auto* s_exp = app.add_subcommand("experiment", "Repeated cross-validation, label sweep or ablation");
  auto* s_grad = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  auto* s_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  synth.add(*s_synth);
  train.add(*s_train);
  experiment.add(*s_exp);
  gradcheck.add(*s_grad);
  eval.add(*s_eval);
  for (auto* sub : {s_synth, s_train, s_exp, s_grad, s_eval}) {
    sub->add_option("--config", config_path, "Flat key=value file; command-line flags take precedence");
  }

  // CLI11 consumes its argument vector back to front.
  std::vector<std::string> given;
  for (int i = 1; i < argc; ++i) given.emplace_back(argv[i]);
  auto reversed = [](std::vector<std::string> v) {
    std::ranges::reverse(v);
    return v;
  };

  try {
    try {
      auto pass1 = reversed(given);
      app.parse(pass1);
      if (!config_path.empty()) {
        auto pass2 = reversed(merge_config(*app.get_subcommands().front(), read_config(config_path), given));
        app.clear();
        app.parse(pass2);
      }
    } catch (const CLI::ParseError& e) {
      return app.exit(e) == 0 ? kExitOk : kExitValidation;
    }

    CLI::App* sub = app.get_subcommands().front();
    if (sub == s_synth) return synth.run();
    if (sub == s_train) return train.run();
    if (sub == s_exp) return experiment.run();
    if (sub == s_grad) return gradcheck.run();
    return eval.run();
  } catch (const lgcn::DomainError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const lgcn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
