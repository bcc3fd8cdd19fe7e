#pragma once

// Encoder MLP g followed by a stack of graph convolutions:
//   X      = g(F)                      (tanh FC layers)
//   A_hat  = renormalized, non-negative cosine adjacency of X
//   H_l    = relu(A_hat H_{l-1} W_l)   for hidden layers, H_0 = X
//   logits = A_hat H_{L-1} W_L         (no activation)
//   Z      = row_softmax(logits)
//
// The fixed-adjacency variant drops the encoder: X = F and A_hat is computed
// once from F, outside of any gradient path.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lgcn/graph.hpp"
#include "lgcn/matrix.hpp"
#include "lgcn/random.hpp"
#include "lgcn/tape.hpp"

namespace lgcn {

enum class Variant { learnable, fixed_adjacency };

constexpr std::string_view variant_name(Variant v) {
  return v == Variant::learnable ? "learnable" : "fixed_adjacency";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "learnable") return Variant::learnable;
  if (s == "fixed_adjacency") return Variant::fixed_adjacency;
  throw ValidationError("unknown variant '" + std::string(s) + "' (expected learnable|fixed_adjacency)");
}

/// Layer widths. The defaults are the full-size model.
struct Architecture {
  std::vector<Eigen::Index> encoder_widths{256, 128};
  std::vector<Eigen::Index> gcn_channels{128, 128, 2};
};

struct DenseLayer {
  Matrix weight;
  Matrix bias;  // 1 x out
};

struct ModelParams {
  Variant variant = Variant::learnable;
  Eigen::Index feature_dim = 0;
  std::vector<DenseLayer> encoder;
  std::vector<Matrix> gcn;

  /// Canonical parameter order; shared by gradients, optimizer state and checkpoints.
  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> out;
    for (auto& layer : encoder) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
    for (auto& w : gcn) out.push_back(&w);
    return out;
  }

  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> out;
    for (const auto& layer : encoder) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
    for (const auto& w : gcn) out.push_back(&w);
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      out.push_back("encoder." + std::to_string(i) + ".weight");
      out.push_back("encoder." + std::to_string(i) + ".bias");
    }
    for (std::size_t i = 0; i < gcn.size(); ++i) out.push_back("gcn." + std::to_string(i) + ".weight");
    return out;
  }

  Eigen::Index num_classes() const { return gcn.empty() ? 0 : gcn.back().cols(); }
};

inline bool bit_equal(const ModelParams& a, const ModelParams& b) {
  if (a.variant != b.variant || a.feature_dim != b.feature_dim) return false;
  auto ta = a.tensors();
  auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!bit_equal(*ta[i], *tb[i])) return false;
  }
  return true;
}

inline double glorot_limit(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = glorot_limit(fan_in, fan_out);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i) {
    for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-limit, limit);
  }
  return w;
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
inline ModelParams init_params(Eigen::Index feature_dim, std::uint64_t seed,
                               Variant variant = Variant::learnable, const Architecture& arch = {}) {
  if (feature_dim < 1) throw ContractError("init_params: feature_dim must be >= 1");
  if (arch.gcn_channels.empty()) throw ContractError("init_params: need at least one graph convolution");
  Rng rng(seed);
  ModelParams p;
  p.variant = variant;
  p.feature_dim = feature_dim;
  Eigen::Index width = feature_dim;
  if (variant == Variant::learnable) {
    for (auto out : arch.encoder_widths) {
      p.encoder.push_back(DenseLayer{glorot_uniform(width, out, rng), Matrix::Zero(1, out)});
      width = out;
    }
  }
  for (auto out : arch.gcn_channels) {
    p.gcn.push_back(glorot_uniform(width, out, rng));
    width = out;
  }
  return p;
}

enum class Mode { train, eval };

struct ForwardOutput {
  ad::Var embeddings;      // X, N x d
  GraphPair graph;         // A, A_hat, D~
  ad::Var logits;          // N x classes
  ad::Var probabilities;   // Z
  std::vector<ad::Var> params;  // leaves, in ModelParams::tensors() order
};

/// X = g(F) recorded on `tape`, with `weights` the already-bound encoder leaves.
inline ad::Var encode(ad::Var features, std::span<const ad::Var> weights) {
  ad::Var h = features;
  for (std::size_t i = 0; i + 1 < weights.size(); i += 2) {
    if (h.cols() != weights[i].rows()) {
      throw ShapeError("encode: features " + shape_str(h.value()) + " vs weight " +
                       shape_str(weights[i].value()));
    }
    h = ad::tanh(ad::add(ad::matmul(h, weights[i]), weights[i + 1]));
  }
  return h;
}

/// Value-only encoder pass.
inline Matrix encode(const ModelParams& params, const Matrix& features) {
  ad::Tape tape;
  std::vector<ad::Var> w;
  for (const auto* t : params.tensors()) w.push_back(tape.constant(*t));
  w.resize(2 * params.encoder.size());
  return encode(tape.constant(features), w).value();
}

/// Graph for the fixed-adjacency variant, computed from the raw features.
inline GraphValues fixed_graph(const Matrix& features) {
  return similarity_graph(features);
}

/// Inverted-dropout mask: entries are 0 or 1/keep.
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double keep, Rng& rng) {
  Matrix m(rows, cols);
  const double kept = 1.0 / keep;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.bernoulli(keep) ? kept : 0.0;
  }
  return m;
}

struct ForwardOptions {
  Mode mode = Mode::eval;
  std::uint64_t seed = 0;      // dropout stream; unused in eval mode
  double dropout_keep = 0.5;
  const GraphValues* fixed = nullptr;  // precomputed graph for Variant::fixed_adjacency
  bool params_require_grad = true;
};

inline ForwardOutput forward(ad::Tape& tape, const ModelParams& params, const Matrix& features,
                             const ForwardOptions& opt = {}) {
  if (features.cols() != params.feature_dim) {
    throw ShapeError("forward: features " + shape_str(features) + " but model expects " +
                     std::to_string(params.feature_dim) + " columns");
  }
  if (!(opt.dropout_keep > 0.0 && opt.dropout_keep <= 1.0)) {
    throw ContractError("forward: dropout keep probability must lie in (0, 1]");
  }
  ForwardOutput out;
  for (const auto* t : params.tensors()) out.params.push_back(tape.leaf(*t, opt.params_require_grad));
  const std::span<const ad::Var> bound(out.params);
  const std::size_t n_enc = 2 * params.encoder.size();

  ad::Var f = tape.constant(features);
  if (params.variant == Variant::learnable) {
    out.embeddings = encode(f, bound.first(n_enc));
    out.graph = similarity_graph(out.embeddings);
  } else {
    out.embeddings = f;
    std::optional<GraphValues> local;
    const GraphValues* g = opt.fixed;
    if (g == nullptr) {
      local = fixed_graph(features);
      g = &*local;
    }
    out.graph = GraphPair{tape.constant(g->raw), tape.constant(g->normalized), tape.constant(g->degree)};
  }

  Rng rng(opt.seed);
  const bool drop = opt.mode == Mode::train && opt.dropout_keep < 1.0;
  ad::Var h = out.embeddings;
  const auto layers = bound.subspan(n_enc);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (drop) h = ad::mul(h, tape.constant(dropout_mask(h.rows(), h.cols(), opt.dropout_keep, rng)));
    h = ad::matmul(out.graph.normalized, ad::matmul(h, layers[l]));
    if (l + 1 < layers.size()) h = ad::relu(h);
  }
  out.logits = h;
  out.probabilities = ad::row_softmax(h);
  return out;
}

/// Eval-mode class probabilities.
inline Matrix predict(const ModelParams& params, const Matrix& features, const GraphValues* fixed = nullptr) {
  ad::Tape tape;
  ForwardOptions opt;
  opt.fixed = fixed;
  opt.params_require_grad = false;
  return forward(tape, params, features, opt).probabilities.value();
}

}  // namespace lgcn
