#pragma once

// Repeated k-fold cross-validation in the transductive setting: every node is
// in the graph of every run, the test fold is evaluated, and only a
// class-balanced sample of the training portion contributes labels.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgcn/metrics.hpp"
#include "lgcn/model.hpp"
#include "lgcn/random.hpp"
#include "lgcn/training.hpp"

namespace lgcn {

struct Dataset {
  Matrix features;
  std::vector<int> labels;

  Eigen::Index size() const { return features.rows(); }
};

/// Two isotropic Gaussian classes. Class means sit at offset*1 -/+ (separation/2)*u
/// for a seeded random unit vector u, so `separation` is the distance between the
/// means. The shared offset keeps cosine similarities mostly positive, like
/// non-negative CNN activations.
struct SyntheticSpec {
  Eigen::Index n_per_class = 345;
  Eigen::Index dim = 512;
  double separation = 6.0;
  double stddev = 1.0;
  double offset = 0.27;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_per_class < 1 || dim < 1) throw ValidationError("synthetic: n_per_class and dim must be >= 1");
    if (!(separation >= 0.0) || !(stddev > 0.0) || !(offset >= 0.0)) {
      throw ValidationError("synthetic: separation >= 0, stddev > 0 and offset >= 0 required");
    }
  }
};

/// The benchmark used for the ablation and label-budget studies. Equal to the
/// defaults of SyntheticSpec.
inline SyntheticSpec standard_benchmark() { return SyntheticSpec{}; }

/// Rows are ordered class 0 first, then class 1.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0x5E7Du}));
  Eigen::VectorXd u(spec.dim);
  for (Eigen::Index j = 0; j < spec.dim; ++j) u(j) = rng.normal();
  u /= u.norm();
  Dataset d;
  d.features.resize(2 * spec.n_per_class, spec.dim);
  for (Eigen::Index i = 0; i < 2 * spec.n_per_class; ++i) {
    const int y = i < spec.n_per_class ? 0 : 1;
    const double side = y == 1 ? 0.5 : -0.5;
    for (Eigen::Index j = 0; j < spec.dim; ++j) {
      d.features(i, j) = spec.offset + side * spec.separation * u(j) + spec.stddev * rng.normal();
    }
    d.labels.push_back(y);
  }
  return d;
}

/// One (variant, gamma) configuration evaluated in a sweep.
struct Arm {
  Variant variant = Variant::learnable;
  double gamma = 0.0;
};

/// Gamma used by the "with matrix norm" ablation arm when the plan supplies none.
inline constexpr double kDefaultAblationGamma = 1e-5;

struct ExperimentPlan {
  std::size_t label_budget = 50;
  int folds = 10;
  int repeats = 10;
  std::vector<Variant> variants{Variant::learnable};
  std::vector<double> gammas{0.0};
  std::uint64_t master_seed = 0;
  TrainConfig train;
  Architecture arch;
  int threads = 1;
};

/// Smallest training portion over all folds.
inline std::size_t min_training_size(std::size_t n, int folds) {
  const auto f = static_cast<std::size_t>(folds);
  return n - (n + f - 1) / f;
}

inline void validate_plan(const ExperimentPlan& plan, const Dataset& data, std::span<const std::size_t> budgets) {
  const auto n = static_cast<std::size_t>(data.size());
  if (data.labels.size() != n) throw ValidationError("dataset: label count does not match feature rows");
  if (plan.folds < 2) throw ValidationError("plan: folds must be >= 2");
  if (static_cast<std::size_t>(plan.folds) > n) throw ValidationError("plan: more folds than nodes");
  if (plan.repeats < 1) throw ValidationError("plan: repeats must be >= 1");
  if (plan.threads < 1) throw ValidationError("plan: threads must be >= 1");
  for (double g : plan.gammas) {
    if (!(g >= 0.0)) throw ValidationError("plan: gamma values must be >= 0");
  }
  const std::size_t cap = min_training_size(n, plan.folds);
  for (auto b : budgets) {
    if (b < 1 || b > cap) {
      throw ValidationError("plan: label budget " + std::to_string(b) + " infeasible; must lie in [1, " +
                            std::to_string(cap) + "] for " + std::to_string(n) + " nodes and " +
                            std::to_string(plan.folds) + " folds");
    }
  }
  plan.train.validate();
}

/// fold_of[i] in [0, folds). Shuffle then deal into contiguous chunks whose sizes differ by at most one.
inline std::vector<int> make_folds(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold_of(n);
  const auto f = static_cast<std::size_t>(folds);
  for (std::size_t k = 0; k < n; ++k) fold_of[order[k]] = static_cast<int>((k * f) / n);
  return fold_of;
}

struct Split {
  std::vector<int> fold_of;
  int attempts = 1;
};

/// Draws a fold assignment where every test fold and every training portion contains both classes.
/// Retries with the next derived seed; gives up after 1000 attempts.
inline Split draw_split(const Dataset& data, int folds, std::uint64_t master, int repeat) {
  const std::size_t n = data.labels.size();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Split s{make_folds(n, folds, derive_seed(master, {0x5B17u, static_cast<std::uint64_t>(repeat),
                                                     static_cast<std::uint64_t>(attempt)})),
            attempt + 1};
    bool ok = true;
    for (int f = 0; f < folds && ok; ++f) {
      std::size_t test_pos = 0, test_neg = 0, train_pos = 0, train_neg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool pos = data.labels[i] == 1;
        if (s.fold_of[i] == f) (pos ? test_pos : test_neg) += 1;
        else (pos ? train_pos : train_neg) += 1;
      }
      ok = test_pos > 0 && test_neg > 0 && train_pos > 0 && train_neg > 0;
    }
    if (ok) return s;
  }
  throw ValidationError("could not draw a split with both classes in every fold");
}

inline std::uint64_t split_hash(const std::vector<int>& fold_of) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (int f : fold_of) h = splitmix64(h ^ static_cast<std::uint64_t>(f));
  return h;
}

/// Class-balanced labeled sample of `budget` nodes from the training portion (fold_of != test_fold).
/// Each class contributes a prefix of its own seeded shuffle, so samples for growing budgets are nested.
/// When one class runs out the remainder comes from the other class.
inline std::vector<bool> sample_labeled(const Dataset& data, const std::vector<int>& fold_of, int test_fold,
                                        std::size_t budget, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == test_fold) continue;
    (data.labels[i] == 1 ? pos : neg).push_back(i);
  }
  if (budget > pos.size() + neg.size()) {
    throw ValidationError("label budget " + std::to_string(budget) + " exceeds training portion of " +
                          std::to_string(pos.size() + neg.size()));
  }
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  // The odd extra label goes to a seeded coin flip so neither class is favored.
  std::size_t take_pos = budget / 2;
  if (budget % 2 == 1 && rng.bernoulli(0.5)) ++take_pos;
  take_pos = std::min(take_pos, pos.size());
  std::size_t take_neg = std::min(budget - take_pos, neg.size());
  take_pos = budget - take_neg;
  std::vector<bool> mask(fold_of.size(), false);
  for (std::size_t k = 0; k < take_pos; ++k) mask[pos[k]] = true;
  for (std::size_t k = 0; k < take_neg; ++k) mask[neg[k]] = true;
  return mask;
}

struct RunRecord {
  Variant variant = Variant::learnable;
  std::size_t budget = 0;
  double gamma = 0.0;
  int repeat = 0;
  int fold = 0;
  double auc = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::size_t n_eval = 0;
  std::size_t n_labeled = 0;
  std::uint64_t split_hash = 0;
  double final_loss = 0.0;
};

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;
};

struct SweepCell {
  Variant variant = Variant::learnable;
  std::size_t budget = 0;
  double gamma = 0.0;
  std::size_t n_runs = 0;
  MetricStats auc, accuracy, sensitivity, specificity;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::vector<RunRecord> runs;  // ordered by (budget, arm, repeat, fold)
  int resampled_splits = 0;

  const SweepCell* find(Variant v, std::size_t budget, double gamma) const {
    for (const auto& c : cells) {
      if (c.variant == v && c.budget == budget && c.gamma == gamma) return &c;
    }
    return nullptr;
  }
};

/// Mean and sample standard deviation (0 for a single value).
inline MetricStats summarize(const std::vector<double>& xs) {
  MetricStats s;
  if (xs.empty()) return s;
  double total = 0.0;
  for (double x : xs) total += x;
  s.mean = total / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

/// Everything one training run needs; the seeds depend on (repeat, fold) only,
/// so every arm and budget sees the same split, labeled sample and initialization stream.
struct RunJob {
  Arm arm;
  std::size_t budget = 0;
  int repeat = 0;
  int fold = 0;
};

struct RunContext {
  const Dataset* data = nullptr;
  const std::vector<Split>* splits = nullptr;
  const ExperimentPlan* plan = nullptr;
};

/// Labeled view used for training: only labeled nodes keep their class; all others read 0.
inline LabelSet training_view(const Dataset& data, const std::vector<bool>& labeled) {
  LabelSet s;
  s.labeled_mask = labeled;
  s.labels.assign(data.labels.size(), 0);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (labeled[i]) s.labels[i] = data.labels[i];
  }
  return s;
}

inline RunRecord execute_run(const RunContext& ctx, const RunJob& job) {
  const Dataset& data = *ctx.data;
  const ExperimentPlan& plan = *ctx.plan;
  const Split& split = (*ctx.splits)[static_cast<std::size_t>(job.repeat)];
  const auto r = static_cast<std::uint64_t>(job.repeat);
  const auto f = static_cast<std::uint64_t>(job.fold);

  const std::vector<bool> labeled =
      sample_labeled(data, split.fold_of, job.fold, job.budget, derive_seed(plan.master_seed, {0x1ABu, r, f}));
  std::vector<bool> test(split.fold_of.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    test[i] = split.fold_of[i] == job.fold;
    if (test[i] && labeled[i]) throw ContractError("test node " + std::to_string(i) + " leaked into the labeled set");
  }

  TrainConfig cfg = plan.train;
  cfg.gamma = job.arm.gamma;
  cfg.seed = derive_seed(plan.master_seed, {0x7A1u, r, f});
  TrainResult trained = train(data.features, training_view(data, labeled), cfg, job.arm.variant, plan.arch);

  std::optional<GraphValues> fixed;
  if (job.arm.variant == Variant::fixed_adjacency) fixed = fixed_graph(data.features);
  const Matrix probs = predict(trained.params, data.features, fixed ? &*fixed : nullptr);
  const EvalReport ev = evaluate(probs, LabelSet::fully_labeled(data.labels), test);

  RunRecord rec;
  rec.variant = job.arm.variant;
  rec.budget = job.budget;
  rec.gamma = job.arm.gamma;
  rec.repeat = job.repeat;
  rec.fold = job.fold;
  rec.auc = ev.auc;
  rec.accuracy = ev.accuracy;
  rec.sensitivity = ev.sensitivity;
  rec.specificity = ev.specificity;
  rec.n_eval = ev.n_eval;
  rec.n_labeled = static_cast<std::size_t>(std::count(labeled.begin(), labeled.end(), true));
  rec.split_hash = split_hash(split.fold_of);
  rec.final_loss = trained.loss_history.empty() ? 0.0 : trained.loss_history.back();
  return rec;
}

/// Runs every (budget, arm, repeat, fold) combination and aggregates one cell per (budget, arm).
inline SweepReport run_arms(const Dataset& data, const ExperimentPlan& plan, const std::vector<std::size_t>& budgets,
                            const std::vector<Arm>& arms) {
  validate_plan(plan, data, budgets);
  SweepReport report;
  if (budgets.empty() || arms.empty()) return report;

  std::vector<Split> splits;
  for (int r = 0; r < plan.repeats; ++r) {
    splits.push_back(draw_split(data, plan.folds, plan.master_seed, r));
    report.resampled_splits += splits.back().attempts - 1;
  }

  std::vector<RunJob> jobs;
  for (auto b : budgets) {
    for (const auto& arm : arms) {
      for (int r = 0; r < plan.repeats; ++r) {
        for (int f = 0; f < plan.folds; ++f) jobs.push_back(RunJob{arm, b, r, f});
      }
    }
  }

  const RunContext ctx{&data, &splits, &plan};
  report.runs.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        report.runs[k] = execute_run(ctx, jobs[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(plan.threads, static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const std::size_t per_cell = static_cast<std::size_t>(plan.repeats) * static_cast<std::size_t>(plan.folds);
  for (std::size_t c = 0; c * per_cell < report.runs.size(); ++c) {
    std::vector<double> auc, acc, sens, spec;
    for (std::size_t k = c * per_cell; k < (c + 1) * per_cell; ++k) {
      const auto& run = report.runs[k];
      auc.push_back(run.auc);
      acc.push_back(run.accuracy);
      sens.push_back(run.sensitivity);
      spec.push_back(run.specificity);
    }
    const auto& first = report.runs[c * per_cell];
    report.cells.push_back(SweepCell{first.variant, first.budget, first.gamma, per_cell, summarize(auc),
                                     summarize(acc), summarize(sens), summarize(spec)});
  }
  return report;
}

inline std::vector<Arm> plan_arms(const ExperimentPlan& plan) {
  std::vector<Arm> arms;
  for (auto v : plan.variants) {
    for (double g : plan.gammas) arms.push_back(Arm{v, g});
  }
  return arms;
}

inline SweepReport run_cross_validation(const Dataset& data, const ExperimentPlan& plan) {
  return run_arms(data, plan, {plan.label_budget}, plan_arms(plan));
}

inline SweepReport run_label_sweep(const Dataset& data, const ExperimentPlan& plan,
                                   const std::vector<std::size_t>& budgets) {
  return run_arms(data, plan, budgets, plan_arms(plan));
}

/// Gamma of the penalized ablation arm: the first positive plan gamma, else the default.
inline double ablation_gamma(const ExperimentPlan& plan) {
  for (double g : plan.gammas) {
    if (g > 0.0) return g;
  }
  return kDefaultAblationGamma;
}

/// Fixed-adjacency baseline, full model, and full model with the Frobenius penalty, on identical splits.
inline SweepReport run_ablation(const Dataset& data, const ExperimentPlan& plan) {
  const std::vector<Arm> arms{{Variant::fixed_adjacency, 0.0},
                              {Variant::learnable, 0.0},
                              {Variant::learnable, ablation_gamma(plan)}};
  return run_arms(data, plan, {plan.label_budget}, arms);
}

// ---- serialization ----

inline nlohmann::json to_json(const MetricStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }

inline nlohmann::json to_json(const SweepReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"variant", variant_name(c.variant)},
                     {"budget", c.budget},
                     {"gamma", c.gamma},
                     {"n_runs", c.n_runs},
                     {"auc", to_json(c.auc)},
                     {"accuracy", to_json(c.accuracy)},
                     {"sensitivity", to_json(c.sensitivity)},
                     {"specificity", to_json(c.specificity)}});
  }
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"variant", variant_name(r.variant)},
                    {"budget", r.budget},
                    {"gamma", r.gamma},
                    {"repeat", r.repeat},
                    {"fold", r.fold},
                    {"auc", r.auc},
                    {"accuracy", r.accuracy},
                    {"sensitivity", r.sensitivity},
                    {"specificity", r.specificity},
                    {"n_eval", r.n_eval},
                    {"n_labeled", r.n_labeled},
                    {"split_hash", r.split_hash},
                    {"final_loss", r.final_loss}});
  }
  return {{"cells", cells}, {"runs", runs}, {"resampled_splits", report.resampled_splits}};
}

}  // namespace lgcn
