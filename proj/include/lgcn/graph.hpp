#pragma once

// Cosine-similarity adjacency and the renormalized propagation operator
//   S      = (X X^T) / (eta(X) eta(X)^T),   eta = per-row L2 norm
//   A      = max(S, 0)                      (edge weights used by the model)
//   A~     = A + I
//   D~_ii  = sum_j A~_ij
//   A_hat  = D~^(-1/2) A~ D~^(-1/2)
// Both are built from tape ops, so gradients reach whatever produced X.

#include <string>

#include "lgcn/matrix.hpp"
#include "lgcn/tape.hpp"

namespace lgcn {

/// Rows of X whose norm is below this are rejected by cosine_adjacency.
inline constexpr double kNormEpsilon = 1e-12;
/// Renormalized degrees below this are rejected by normalize_adjacency.
inline constexpr double kDegreeEpsilon = 1e-8;

/// Raw adjacency, renormalized adjacency and the self-loop degrees (Nx1).
struct GraphPair {
  ad::Var raw;
  ad::Var normalized;
  ad::Var degree;
};

/// Plain-value counterpart of GraphPair.
struct GraphValues {
  Matrix raw;
  Matrix normalized;
  Matrix degree;
};

inline ad::Var cosine_adjacency(ad::Var x) {
  ad::Var norms = ad::row_l2_norms(x);
  const Matrix& nv = norms.value();
  for (Eigen::Index i = 0; i < nv.rows(); ++i) {
    if (!(nv(i, 0) >= kNormEpsilon)) {
      throw DomainError("cosine_adjacency: row " + std::to_string(i) + " has norm below 1e-12");
    }
  }
  ad::Var gram = ad::gram(x);
  ad::Var outer = ad::matmul(norms, ad::transpose(norms));
  return ad::div(gram, outer);
}

inline GraphPair normalize_adjacency(ad::Var a) {
  const Matrix& av = a.value();
  if (av.rows() != av.cols()) throw ShapeError("normalize_adjacency: not square " + shape_str(av));
  ad::Tape& tape = *a.tape;
  ad::Var with_loops = ad::add(a, tape.constant(Matrix::Identity(av.rows(), av.cols())));
  ad::Var degree = ad::row_sum(with_loops);
  const Matrix& dv = degree.value();
  for (Eigen::Index i = 0; i < dv.rows(); ++i) {
    if (!(dv(i, 0) >= kDegreeEpsilon)) {
      throw DomainError("normalize_adjacency: node " + std::to_string(i) + " has degree " +
                        std::to_string(dv(i, 0)) + " below 1e-8");
    }
  }
  ad::Var inv_sqrt = ad::rsqrt(degree);
  ad::Var normalized = ad::mul(with_loops, ad::matmul(inv_sqrt, ad::transpose(inv_sqrt)));
  return GraphPair{a, normalized, degree};
}

// Value-only conveniences (no gradient bookkeeping kept by the caller).

inline Matrix cosine_adjacency(const Matrix& x) {
  ad::Tape tape;
  return cosine_adjacency(tape.constant(x)).value();
}

inline GraphValues normalize_adjacency(const Matrix& a) {
  ad::Tape tape;
  GraphPair g = normalize_adjacency(tape.constant(a));
  return GraphValues{g.raw.value(), g.normalized.value(), g.degree.value()};
}

/// Graph used by the model: negative similarities are cut to zero weight before
/// renormalization. Without the cut, dissimilar neighbours can drive a degree
/// to zero or below once the encoder starts separating classes.
inline GraphPair similarity_graph(ad::Var x) { return normalize_adjacency(ad::relu(cosine_adjacency(x))); }

inline GraphValues similarity_graph(const Matrix& x) {
  ad::Tape tape;
  GraphPair g = similarity_graph(tape.constant(x));
  return GraphValues{g.raw.value(), g.normalized.value(), g.degree.value()};
}

inline double frobenius_sq(const Matrix& a) { return a.squaredNorm(); }

}  // namespace lgcn
