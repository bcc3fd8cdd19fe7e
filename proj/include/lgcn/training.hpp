#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lgcn/graph.hpp"
#include "lgcn/model.hpp"
#include "lgcn/tape.hpp"

namespace lgcn {

/// Per-node class index plus the mask of nodes whose label may be used for training.
struct LabelSet {
  std::vector<int> labels;
  std::vector<bool> labeled_mask;

  std::size_t size() const { return labels.size(); }

  std::size_t num_labeled() const {
    return static_cast<std::size_t>(std::count(labeled_mask.begin(), labeled_mask.end(), true));
  }

  static LabelSet fully_labeled(std::vector<int> labels) {
    LabelSet s;
    s.labeled_mask.assign(labels.size(), true);
    s.labels = std::move(labels);
    return s;
  }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 5e-5;
  double gamma = 0.0;
  int epochs = 300;
  double dropout_keep = 0.5;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ContractError("dropout_keep must lie in (0, 1]");
    if (!(gamma >= 0.0)) throw ContractError("gamma must be >= 0");
    if (!(weight_decay >= 0.0)) throw ContractError("weight_decay must be >= 0");
    if (epochs < 0) throw ContractError("epochs must be >= 0");
  }
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;

  static AdamState zeros_like(const ModelParams& p) {
    AdamState s;
    for (const auto* t : p.tensors()) {
      s.first_moment.push_back(Matrix::Zero(t->rows(), t->cols()));
      s.second_moment.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
    return s;
  }
};

namespace detail {

inline std::vector<std::ptrdiff_t> targets_of(const LabelSet& labels, Eigen::Index n_rows, Eigen::Index n_classes) {
  if (labels.labels.size() != static_cast<std::size_t>(n_rows) ||
      labels.labeled_mask.size() != static_cast<std::size_t>(n_rows)) {
    throw ShapeError("label set covers " + std::to_string(labels.labels.size()) + " nodes, probabilities have " +
                     std::to_string(n_rows) + " rows");
  }
  std::vector<std::ptrdiff_t> t(static_cast<std::size_t>(n_rows), -1);
  bool any = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!labels.labeled_mask[i]) continue;
    const int y = labels.labels[i];
    if (y < 0 || y >= n_classes) {
      throw ContractError("labeled node " + std::to_string(i) + " has invalid class " + std::to_string(y));
    }
    t[i] = y;
    any = true;
  }
  if (!any) throw ContractError("masked_cross_entropy: no labeled nodes");
  return t;
}

}  // namespace detail

/// Sum over labeled nodes of -ln Z[i, y_i]. Unlabeled rows are never read.
inline ad::Var masked_cross_entropy(ad::Var probabilities, const LabelSet& labels) {
  return ad::masked_nll(probabilities,
                        detail::targets_of(labels, probabilities.rows(), probabilities.cols()));
}

/// Cross-entropy plus gamma * ||A||_F^2. With gamma == 0 the penalty node is not recorded.
inline ad::Var total_loss(const ForwardOutput& out, const LabelSet& labels, double gamma) {
  if (!(gamma >= 0.0)) throw ContractError("total_loss: gamma must be >= 0");
  ad::Var ce = masked_cross_entropy(out.probabilities, labels);
  if (gamma == 0.0) return ce;
  return ad::add(ce, ad::scale(ad::frobenius_sq(out.graph.raw), gamma));
}

/// Adam with L2 weight decay folded into the gradient (g += wd * theta),
/// followed by the bias-corrected update.
inline void adam_step(ModelParams& params, const std::vector<Matrix>& grads, AdamState& state,
                      const TrainConfig& config) {
  auto tensors = params.tensors();
  if (grads.size() != tensors.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(tensors.size()) + " parameters");
  }
  if (state.first_moment.size() != tensors.size()) state = AdamState::zeros_like(params);
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Matrix& theta = *tensors[i];
    if (grads[i].rows() != theta.rows() || grads[i].cols() != theta.cols()) {
      throw ShapeError("adam_step: gradient " + shape_str(grads[i]) + " for parameter " + shape_str(theta));
    }
    const Matrix g = grads[i] + config.weight_decay * theta;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    theta.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_epsilon);
  }
}

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;
};

/// Called after each epoch's forward/backward, before the optimizer update.
using EpochObserver = std::function<void(int epoch, const ForwardOutput&, double loss)>;

/// Full-graph training: every epoch is one train-mode forward, one backward and one Adam step.
inline TrainResult train(const Matrix& features, const LabelSet& labels, const TrainConfig& config,
                         ModelParams init, const EpochObserver& observer = {}) {
  config.validate();
  if (labels.num_labeled() == 0) throw ContractError("train: no labeled nodes");
  std::optional<GraphValues> fixed;
  if (init.variant == Variant::fixed_adjacency) fixed = fixed_graph(features);

  TrainResult result{std::move(init), {}};
  AdamState state = AdamState::zeros_like(result.params);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    try {
      ad::Tape tape;
      ForwardOptions opt;
      opt.mode = Mode::train;
      opt.seed = derive_seed(config.seed, {0xD20u, static_cast<std::uint64_t>(epoch)});
      opt.dropout_keep = config.dropout_keep;
      opt.fixed = fixed ? &*fixed : nullptr;
      ForwardOutput out = forward(tape, result.params, features, opt);
      ad::Var loss = total_loss(out, labels, config.gamma);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) throw DomainError("non-finite loss");
      tape.backward(loss);
      std::vector<Matrix> grads;
      for (auto v : out.params) grads.push_back(v.grad());
      if (observer) observer(epoch, out, value);
      result.loss_history.push_back(value);
      adam_step(result.params, grads, state, config);
    } catch (const DomainError& e) {
      throw DomainError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  return result;
}

inline TrainResult train(const Matrix& features, const LabelSet& labels, const TrainConfig& config,
                         Variant variant = Variant::learnable, const Architecture& arch = {},
                         const EpochObserver& observer = {}) {
  return train(features, labels, config,
               init_params(features.cols(), derive_seed(config.seed, {0x1417u}), variant, arch), observer);
}

// ---- finite-difference gradient check ----

/// Relative error between an analytic and a numeric derivative, with an absolute
/// floor on the denominator so entries that are zero up to round-off compare on
/// an absolute scale.
inline constexpr double kGradcheckFloor = 1e-3;

inline double gradcheck_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed(double tol = 1e-5) const { return max_rel_error() < tol; }
};

/// Eval-mode loss and its analytic gradients for a given model.
inline double loss_and_grads(const ModelParams& params, const Matrix& features, const LabelSet& labels,
                             double gamma, std::vector<Matrix>* grads, bool inject_fault = false) {
  ad::Tape tape;
  tape.set_fault_injection(inject_fault);
  ForwardOutput out = forward(tape, params, features);
  ad::Var loss = total_loss(out, labels, gamma);
  if (grads != nullptr) {
    tape.backward(loss);
    grads->clear();
    for (auto v : out.params) grads->push_back(v.grad());
  }
  return loss.value()(0, 0);
}

/// Compares analytic gradients of the eval-mode loss with central differences
/// (step h) for every entry of every parameter.
inline GradcheckReport gradcheck(const ModelParams& params, const Matrix& features, const LabelSet& labels,
                                 double gamma, double h = 1e-6, bool inject_fault = false) {
  std::vector<Matrix> analytic;
  loss_and_grads(params, features, labels, gamma, &analytic, inject_fault);
  GradcheckReport report;
  ModelParams probe = params;
  auto tensors = probe.tensors();
  const auto names = probe.names();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    GradcheckEntry entry{names[k], 0.0, 0.0};
    Matrix& theta = *tensors[k];
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      for (Eigen::Index j = 0; j < theta.cols(); ++j) {
        const double saved = theta(i, j);
        theta(i, j) = saved + h;
        const double up = loss_and_grads(probe, features, labels, gamma, nullptr);
        theta(i, j) = saved - h;
        const double down = loss_and_grads(probe, features, labels, gamma, nullptr);
        theta(i, j) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[k](i, j);
        entry.max_rel_error = std::max(entry.max_rel_error, gradcheck_error(a, numeric));
        entry.max_abs_grad = std::max(entry.max_abs_grad, std::abs(a));
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

/// The down-scaled model used for gradient checking: 8 input features,
/// encoder widths (8, 4), graph convolutions (4, 4, 2).
inline Architecture gradcheck_architecture() { return Architecture{{8, 4}, {4, 4, 2}}; }

struct GradcheckInstance {
  Matrix features;
  LabelSet labels;
  ModelParams params;
};

/// Random N-node instance for the down-scaled model. Half of the nodes are labeled.
inline GradcheckInstance make_gradcheck_instance(std::uint64_t seed, Eigen::Index n_nodes = 6) {
  Rng rng(derive_seed(seed, {0x6C4Eu}));
  GradcheckInstance inst;
  inst.features = Matrix(n_nodes, 8);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) inst.features(i, j) = rng.normal();
  }
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    inst.labels.labels.push_back(static_cast<int>(i % 2));
    inst.labels.labeled_mask.push_back(i < (n_nodes + 1) / 2);
  }
  inst.params = init_params(8, derive_seed(seed, {0x9A7Au}), Variant::learnable, gradcheck_architecture());
  // Non-zero biases so the bias paths are exercised away from the origin.
  for (auto& layer : inst.params.encoder) {
    for (Eigen::Index j = 0; j < layer.bias.cols(); ++j) layer.bias(0, j) = 0.1 * rng.normal();
  }
  return inst;
}

}  // namespace lgcn
