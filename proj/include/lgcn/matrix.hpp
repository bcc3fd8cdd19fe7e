#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <string>

#include "lgcn/error.hpp"

namespace lgcn {

/// Dense double-precision matrix indexed as (row, col).
using Matrix = Eigen::MatrixXd;

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

/// Builds a matrix from nested row lists: from_rows({{1, 2}, {3, 4}}).
inline Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.begin()->size());
  Matrix out(n, m);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != m) throw ShapeError("from_rows: ragged rows");
    Eigen::Index j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  return out;
}

inline Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// FNV-1a over shape and the raw bit patterns of the entries (row-major order).
inline std::uint64_t bit_hash(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(m.rows()));
  mix(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits = 0;
      const double v = m(i, j);
      std::memcpy(&bits, &v, sizeof bits);
      mix(bits);
    }
  }
  return h;
}

inline bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && bit_hash(a) == bit_hash(b) &&
         (a.array() == b.array()).all();
}

}  // namespace lgcn
