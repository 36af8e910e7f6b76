#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lamkit/tensor.hpp"

namespace lamkit {

using LabelMatrix = MatrixX<int>;

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

struct AucScores {
  double micro = 0.0;
  double macro = 0.0;
};

/// Documents x classes 0/1 matrices. Micro F1 pools TP/FP/FN over all cells;
/// macro F1 averages per-class F1, where a class with TP = FP = FN = 0 scores 0.
F1Scores f1_scores(const LabelMatrix& predictions, const LabelMatrix& labels);

namespace detail {

/// Mann-Whitney statistic via average ranks; ties contribute one half.
template <typename Scalar>
double rank_auc(const std::vector<Scalar>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  double positives = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) {
        positive_rank_sum += avg_rank;
        positives += 1.0;
      }
    }
    i = j + 1;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) return -1.0;
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

}  // namespace detail

/// ROC-AUC, micro over all (document, class) cells and macro over classes
/// that contain both a positive and a negative. Throws UndefinedMetricError
/// when either average has nothing to average.
template <typename Scalar>
AucScores auc_scores(const MatrixX<Scalar>& scores, const LabelMatrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ShapeError("auc_scores: scores " + shape_string(scores.rows(), scores.cols()) + " vs labels " +
                     shape_string(labels.rows(), labels.cols()));
  }
  std::vector<Scalar> flat_scores(scores.data(), scores.data() + scores.size());
  std::vector<int> flat_labels(labels.data(), labels.data() + labels.size());
  AucScores out;
  out.micro = detail::rank_auc(flat_scores, flat_labels);
  if (out.micro < 0.0) throw UndefinedMetricError("AUC undefined: need both positive and negative cells");

  double total = 0.0;
  int used = 0;
  for (Index c = 0; c < scores.cols(); ++c) {
    std::vector<Scalar> col(static_cast<std::size_t>(scores.rows()));
    std::vector<int> lab(static_cast<std::size_t>(scores.rows()));
    for (Index r = 0; r < scores.rows(); ++r) {
      col[static_cast<std::size_t>(r)] = scores(r, c);
      lab[static_cast<std::size_t>(r)] = labels(r, c);
    }
    const double auc = detail::rank_auc(col, lab);
    if (auc >= 0.0) {
      total += auc;
      ++used;
    }
  }
  if (used == 0) throw UndefinedMetricError("macro AUC undefined: every class is single-valued");
  out.macro = total / used;
  return out;
}

/// Nearest-rank percentile of ascending `sorted`: element ceil(p/100 * n).
template <typename T>
T nearest_rank(const std::vector<T>& sorted, int percent) {
  if (sorted.empty()) throw std::invalid_argument("nearest_rank: empty sample");
  if (percent < 0 || percent > 100) throw std::invalid_argument("nearest_rank: percent outside [0,100]");
  const std::size_t n = sorted.size();
  std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100;
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

}  // namespace lamkit
