#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lgcn/metrics.hpp"
#include "lgcn/random.hpp"

using lgcn::Matrix;

namespace {

Matrix two_column(const std::vector<double>& s) {
  Matrix z(static_cast<Eigen::Index>(s.size()), 2);
  for (std::size_t i = 0; i < s.size(); ++i) {
    z(static_cast<Eigen::Index>(i), 0) = 1.0 - s[i];
    z(static_cast<Eigen::Index>(i), 1) = s[i];
  }
  return z;
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores on a coarse grid so ties are common.
Instance random_instance(lgcn::Rng& rng) {
  Instance r;
  const std::size_t n = 2 + rng.below(199);
  const bool coarse = rng.bernoulli(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    r.scores.push_back(coarse ? std::floor(u * 10.0) / 10.0 : u);
    r.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  r.labels[0] = 0;
  r.labels[1] = 1;
  return r;
}

}  // namespace

TEST_CASE("AUC examples") {
  const std::vector<double> s1{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y1{1, 1, 0, 0};
  CHECK(lgcn::auc_mann_whitney(s1, y1) == 1.0);

  const std::vector<double> s2{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y2{0, 0, 1, 1};
  CHECK(lgcn::auc_mann_whitney(s2, y2) == 0.75);
  CHECK(lgcn::auc_trapezoid(lgcn::roc_curve(s2, y2)) == Catch::Approx(0.75).margin(1e-12));

  const std::vector<double> s3(6, 0.3);
  const std::vector<int> y3{0, 1, 0, 1, 1, 0};
  CHECK(lgcn::auc_mann_whitney(s3, y3) == 0.5);
}

TEST_CASE("evaluate on a perfect split") {
  const Matrix z = two_column({0.9, 0.8, 0.2, 0.1});
  const auto labels = lgcn::LabelSet::fully_labeled({1, 1, 0, 0});
  const auto r = lgcn::evaluate(z, labels, {true, true, true, true});
  CHECK(r.auc == 1.0);
  CHECK(r.accuracy == 1.0);
  CHECK(r.sensitivity == 1.0);
  CHECK(r.specificity == 1.0);
  CHECK(r.n_eval == 4);
}

TEST_CASE("evaluate honours the mask") {
  const Matrix z = two_column({0.9, 0.1, 0.2, 0.8, 0.7});
  const auto labels = lgcn::LabelSet::fully_labeled({1, 1, 0, 0, 1});
  const auto r = lgcn::evaluate(z, labels, {true, false, true, false, true});
  CHECK(r.n_eval == 3);
  CHECK(r.accuracy == 1.0);
  CHECK_THROWS_AS(lgcn::evaluate(z, labels, {true, false, false, false, true}), lgcn::DomainError);
}

TEST_CASE("confusion boundaries and the >= rule") {
  const std::vector<double> s{0.1, 0.5, 0.7, 0.3};
  const std::vector<int> y{0, 1, 1, 0};
  const auto all_pos = lgcn::confusion(s, y, 0.0);
  CHECK(all_pos.fn == 0);
  CHECK(all_pos.tn == 0);
  CHECK(all_pos.tp + all_pos.fp == 4);
  const auto all_neg = lgcn::confusion(s, y, 0.71);
  CHECK(all_neg.tp == 0);
  CHECK(all_neg.fp == 0);

  const std::vector<double> tie{0.6, 0.6};
  const std::vector<int> ty{1, 0};
  const auto c = lgcn::confusion(tie, ty, 0.5);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.tn == 0);
  CHECK(c.fn == 0);

  const auto at = lgcn::confusion(std::vector<double>{0.5}, std::vector<int>{1}, 0.5);
  CHECK(at.tp == 1);
}

TEST_CASE("ROC curve shape") {
  lgcn::Rng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = random_instance(rng);
    const auto roc = lgcn::roc_curve(inst.scores, inst.labels);
    REQUIRE(roc.size() >= 2);
    CHECK(roc.front().fpr == 0.0);
    CHECK(roc.front().tpr == 0.0);
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);
    for (std::size_t i = 1; i < roc.size(); ++i) {
      CHECK(roc[i].fpr >= roc[i - 1].fpr);
      CHECK(roc[i].tpr >= roc[i - 1].tpr);
    }
  }
}

TEST_CASE("trapezoidal ROC area equals the pair count") {
  lgcn::Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_instance(rng);
    const double mw = lgcn::auc_mann_whitney(inst.scores, inst.labels);
    const double tz = lgcn::auc_trapezoid(lgcn::roc_curve(inst.scores, inst.labels));
    CHECK(std::abs(mw - tz) <= 1e-10);
  }
}

TEST_CASE("AUC is invariant under strictly monotone transforms") {
  lgcn::Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng);
    std::vector<double> t;
    for (double s : inst.scores) t.push_back(std::exp(3.0 * s) - 7.0);
    CHECK(lgcn::auc_mann_whitney(t, inst.labels) == lgcn::auc_mann_whitney(inst.scores, inst.labels));
  }
}

TEST_CASE("label flip duality") {
  lgcn::Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng);
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < inst.scores.size(); ++i) {
      s.push_back(1.0 - inst.scores[i]);
      y.push_back(1 - inst.labels[i]);
    }
    CHECK(std::abs(lgcn::auc_mann_whitney(s, y) - lgcn::auc_mann_whitney(inst.scores, inst.labels)) <= 1e-12);
  }
}

TEST_CASE("single-class evaluation set") {
  const std::vector<double> s{0.2, 0.9};
  const std::vector<int> y{1, 1};
  CHECK_THROWS_AS(lgcn::auc_mann_whitney(s, y), lgcn::DomainError);
}

TEST_CASE("report serializes") {
  const auto r = lgcn::evaluate(two_column({0.9, 0.2}), lgcn::LabelSet::fully_labeled({1, 0}), {true, true});
  const auto j = lgcn::to_json(r);
  CHECK(j.at("auc").get<double>() == 1.0);
  CHECK(j.at("roc_points").size() == r.roc_points.size());
  CHECK(j.at("confusion").at("tp").get<int>() == 1);
}
