#pragma once

// Binary classification metrics. Class 1 is the positive class and its
// probability is the score; a node is predicted positive iff score >= threshold.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgcn/matrix.hpp"
#include "lgcn/training.hpp"

namespace lgcn {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct EvalReport {
  double auc = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::vector<RocPoint> roc_points;
  std::size_t n_eval = 0;
  Confusion confusion;
};

/// Mann-Whitney statistic by explicit pair counting: P(pos > neg) + 0.5 P(pos == neg).
inline double auc_mann_whitney(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++n_pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  for (int y : labels) n_neg += (y != 1);
  if (n_pos == 0 || n_neg == 0) throw DomainError("AUC undefined: evaluation set has a single class");
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// ROC by sweeping the threshold down through the distinct scores.
/// Starts at (0,0) and ends at (1,1).
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DomainError("ROC undefined: evaluation set has a single class");

  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (labels[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    pts.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                   static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return pts;
}

inline double auc_trapezoid(const std::vector<RocPoint>& roc) {
  double area = 0.0;
  for (std::size_t k = 1; k < roc.size(); ++k) {
    area += (roc[k].fpr - roc[k - 1].fpr) * (roc[k].tpr + roc[k - 1].tpr) * 0.5;
  }
  return area;
}

inline Confusion confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace detail {

inline std::pair<std::vector<double>, std::vector<int>> select_eval(const Matrix& probabilities,
                                                                    const LabelSet& labels,
                                                                    const std::vector<bool>& eval_mask) {
  if (probabilities.cols() < 2) throw ShapeError("evaluate: need two class columns, got " + shape_str(probabilities));
  if (eval_mask.size() != static_cast<std::size_t>(probabilities.rows()) ||
      labels.labels.size() != eval_mask.size()) {
    throw ShapeError("evaluate: mask/label length does not match " + shape_str(probabilities));
  }
  std::vector<double> scores;
  std::vector<int> ys;
  for (std::size_t i = 0; i < eval_mask.size(); ++i) {
    if (!eval_mask[i]) continue;
    scores.push_back(probabilities(static_cast<Eigen::Index>(i), 1));
    ys.push_back(labels.labels[i]);
  }
  return {std::move(scores), std::move(ys)};
}

}  // namespace detail

inline Confusion confusion(const Matrix& probabilities, const LabelSet& labels, const std::vector<bool>& eval_mask,
                           double threshold = 0.5) {
  auto [scores, ys] = detail::select_eval(probabilities, labels, eval_mask);
  return confusion(scores, ys, threshold);
}

inline EvalReport evaluate(const Matrix& probabilities, const LabelSet& labels, const std::vector<bool>& eval_mask,
                           double threshold = 0.5) {
  auto [scores, ys] = detail::select_eval(probabilities, labels, eval_mask);
  EvalReport r;
  r.n_eval = scores.size();
  r.auc = auc_mann_whitney(scores, ys);
  r.roc_points = roc_curve(scores, ys);
  r.confusion = confusion(scores, ys, threshold);
  const auto& c = r.confusion;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(r.n_eval);
  r.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : r.roc_points) roc.push_back({p.fpr, p.tpr});
  return {{"auc", r.auc},
          {"accuracy", r.accuracy},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"n_eval", r.n_eval},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
          {"roc_points", roc}};
}

}  // namespace lgcn
