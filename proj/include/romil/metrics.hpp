// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "romil/error.hpp"
#include "romil/matrix.hpp"

namespace romil {

/// Binary AUROC by the Mann–Whitney rank statistic; tied scores share their
/// midrank.
inline double auroc_binary(const std::vector<bool>& positive, const std::vector<double>& scores) {
  if (positive.size() != scores.size()) throw DimensionError("auroc: labels/scores length differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ArgumentError("auroc: need both positives and negatives");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// One-vs-rest AUROC averaged over the classes present in `y_true`.
/// `scores` is n×K.
inline double auroc_macro(const std::vector<std::size_t>& y_true, const Matrix<double>& scores) {
  if (y_true.size() != scores.rows()) throw DimensionError("auroc_macro: row count mismatch");
  std::vector<std::size_t> present;
  for (std::size_t k = 0; k < scores.cols(); ++k)
    if (std::find(y_true.begin(), y_true.end(), k) != y_true.end()) present.push_back(k);
  for (std::size_t y : y_true)
    if (y >= scores.cols()) throw ArgumentError("auroc_macro: label exceeds score columns");
  if (present.size() < 2) throw ArgumentError("auroc_macro: fewer than two classes present");
  double total = 0.0;
  for (std::size_t k : present) {
    std::vector<bool> pos(y_true.size());
    std::vector<double> s(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      pos[i] = y_true[i] == k;
      s[i] = scores(i, k);
    }
    total += auroc_binary(pos, s);
  }
  return total / static_cast<double>(present.size());
}

/// Step-function average precision Σ (R_i − R_{i−1})·P_i in descending score
/// order; tied scores form a single threshold.
inline double average_precision(const std::vector<bool>& positive,
                                const std::vector<double>& scores) {
  if (positive.size() != scores.size()) throw DimensionError("average_precision: length mismatch");
  const std::size_t n = scores.size();
  const std::size_t n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  if (n_pos == 0) throw ArgumentError("average_precision: no positive samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]]) ++tp;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// One-vs-rest AP averaged over classes present.
inline double average_precision_macro(const std::vector<std::size_t>& y_true,
                                      const Matrix<double>& scores) {
  if (y_true.size() != scores.rows()) throw DimensionError("ap_macro: row count mismatch");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < scores.cols(); ++k) {
    std::vector<bool> pos(y_true.size());
    std::vector<double> s(y_true.size());
    bool any = false;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      pos[i] = y_true[i] == k;
      any = any || pos[i];
      s[i] = scores(i, k);
    }
    if (!any) continue;
    total += average_precision(pos, s);
    ++used;
  }
  if (used == 0) throw ArgumentError("ap_macro: no positive samples for any class");
  return total / static_cast<double>(used);
}

}  // namespace romil
