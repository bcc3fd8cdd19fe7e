#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lgcn/graph.hpp"
#include "support/oracles.hpp"

using Catch::Approx;
using lgcn::Matrix;
using lgcn::from_rows;
namespace ad = lgcn::ad;
namespace lt = lgcn::testing;

TEST_CASE("cosine_adjacency examples") {
  CHECK(lgcn::cosine_adjacency(from_rows({{1, 1}}))(0, 0) == Approx(1.0).epsilon(1e-15));
  CHECK(lgcn::cosine_adjacency(from_rows({{1, 0}, {0, 1}})) == from_rows({{1, 0}, {0, 1}}));

  const Matrix x = from_rows({{1, 1}, {1, 0}});
  const Matrix a = lgcn::cosine_adjacency(x);
  const double oracle = lt::naive_cosine(x)(0, 1);
  CHECK(oracle == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(a(0, 1) == Approx(oracle).epsilon(1e-15));
  CHECK(a(0, 1) == Approx(0.70711).margin(1e-5));
  CHECK(a(1, 0) == a(0, 1));
}

TEST_CASE("cosine_adjacency rejects a zero row and names it") {
  const Matrix x = from_rows({{1, 2}, {0, 0}, {3, 1}});
  REQUIRE_THROWS_AS(lgcn::cosine_adjacency(x), lgcn::DomainError);
  REQUIRE_THROWS_WITH(lgcn::cosine_adjacency(x), Catch::Matchers::ContainsSubstring("row 1"));
}

TEST_CASE("cosine_adjacency matches the per-pair oracle") {
  lgcn::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = lt::random_matrix(1 + static_cast<Eigen::Index>(rng.below(15)), 4, rng);
    CHECK((lgcn::cosine_adjacency(x) - lt::naive_cosine(x)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("normalize_adjacency examples") {
  const auto zero = lgcn::normalize_adjacency(Matrix::Zero(2, 2));
  CHECK(zero.normalized == Matrix::Identity(2, 2));
  CHECK(zero.degree == Matrix::Ones(2, 1));

  const auto ones = lgcn::normalize_adjacency(Matrix::Ones(2, 2));
  CHECK(ones.degree == from_rows({{3}, {3}}));
  CHECK(ones.normalized(0, 0) == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(ones.normalized(0, 1) == Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(ones.normalized(1, 0) == Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(ones.normalized(1, 1) == Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("normalize_adjacency rejects vanishing degree") {
  const Matrix a = from_rows({{0, -1}, {-1, 0}});
  REQUIRE_THROWS_AS(lgcn::normalize_adjacency(a), lgcn::DomainError);
  REQUIRE_THROWS_WITH(lgcn::normalize_adjacency(a), Catch::Matchers::ContainsSubstring("node 0"));
  REQUIRE_THROWS_AS(lgcn::normalize_adjacency(Matrix::Zero(2, 3)), lgcn::ShapeError);
}

TEST_CASE("normalize_adjacency matches the loop oracle and is symmetric") {
  lgcn::Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = lgcn::cosine_adjacency(lt::random_matrix(2 + static_cast<Eigen::Index>(rng.below(10)), 5, rng)
                                                .cwiseAbs());
    const auto g = lgcn::normalize_adjacency(a);
    CHECK((g.normalized - lt::naive_renormalize(a)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g.normalized - g.normalized.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    Matrix with_loops = a + Matrix::Identity(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < a.cols(); ++j) s += with_loops(i, j);
      CHECK(g.degree(i, 0) == Approx(s).epsilon(1e-15));
    }
  }
}

TEST_CASE("frobenius_sq") {
  CHECK(lgcn::frobenius_sq(Matrix::Zero(2, 2)) == 0.0);
  CHECK(lgcn::frobenius_sq(from_rows({{1, 2}, {3, 4}})) == 30.0);

  const Matrix a = from_rows({{1, 2}, {3, 4}});
  auto f = [](const Matrix& m) {
    ad::Tape t;
    return ad::frobenius_sq(t.leaf(m)).value()(0, 0);
  };
  const Matrix numeric = lt::numeric_gradient(f, a);
  CHECK(lt::max_rel_error(numeric, from_rows({{2, 4}, {6, 8}})) < 1e-8);
  ad::Tape t;
  auto v = t.leaf(a);
  t.backward(ad::frobenius_sq(v));
  CHECK(v.grad() == from_rows({{2, 4}, {6, 8}}));
}

TEST_CASE("adjacency is equivariant under row permutations") {
  lgcn::Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = lt::random_matrix(9, 4, rng);
    const Matrix p = lt::permutation_matrix(lt::random_permutation(9, rng));
    const Matrix lhs = lgcn::cosine_adjacency(p * x);
    const Matrix rhs = p * lgcn::cosine_adjacency(x) * p.transpose();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("adjacency is invariant to positive row scaling") {
  lgcn::Rng rng(22);
  const Matrix x = lt::random_matrix(7, 5, rng);
  Matrix scaled = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) scaled.row(i) *= 0.01 + 50.0 * rng.uniform();
  CHECK((lgcn::cosine_adjacency(scaled) - lgcn::cosine_adjacency(x)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("similarity_graph cuts negative similarities") {
  const Matrix x = from_rows({{1, 0}, {-1, 0.1}, {1, 1}});
  const auto g = lgcn::similarity_graph(x);
  CHECK(g.raw.minCoeff() >= 0.0);
  CHECK(g.raw(0, 1) == 0.0);
  CHECK(g.raw(0, 2) == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK((g.normalized - lt::naive_renormalize(g.raw)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient of sum(A_hat) reaches the embeddings") {
  lgcn::Rng rng(31);
  for (bool clip : {false, true}) {
    const Matrix x = lt::random_matrix(5, 3, rng).cwiseAbs() + Matrix::Constant(5, 3, 0.1);
    auto loss = [clip](ad::Tape& t, ad::Var v) {
      ad::Var a = lgcn::cosine_adjacency(v);
      if (clip) a = ad::relu(a);
      return ad::sum(lgcn::normalize_adjacency(a).normalized);
    };
    auto value = [&](const Matrix& m) {
      ad::Tape t;
      return loss(t, t.leaf(m)).value()(0, 0);
    };
    ad::Tape t;
    auto v = t.leaf(x);
    t.backward(loss(t, v));
    INFO("clip " << clip);
    CHECK(v.grad().cwiseAbs().maxCoeff() > 1e-6);
    CHECK(lt::max_rel_error(v.grad(), lt::numeric_gradient(value, x)) < 1e-5);
  }
}
