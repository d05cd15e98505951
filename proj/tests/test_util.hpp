// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "romil/grid.hpp"
#include "romil/matrix.hpp"

namespace romil::testing {

template <typename T = double>
Matrix<T> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix<T> m(r, c);
  for (T& v : m.values()) v = static_cast<T>(n(rng));
  return m;
}

inline std::vector<GridCoord> random_coords(std::size_t n, std::int64_t extent, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> d(0, extent - 1);
  std::vector<GridCoord> out;
  while (out.size() < n) {
    GridCoord c{d(rng), d(rng)};
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

inline std::vector<bool> random_mask(std::size_t n, double masked_fraction, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - masked_fraction);
  std::vector<bool> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = keep(rng);
  if (std::find(m.begin(), m.end(), true) == m.end()) m[rng() % n] = true;
  return m;
}

/// |a − n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from turning central-difference round-off into a huge ratio.
inline double rel_err(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

/// Central differences (step h) of `loss` with respect to every entry of
/// every tensor in `params`, compared with the matching `grads` entries.
inline GradCheckResult grad_check(const std::vector<Matrix<double>*>& params,
                                  const std::vector<Matrix<double>*>& grads,
                                  const std::function<double()>& loss, double h = 1e-6) {
  GradCheckResult r;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t]->size(); ++i) {
      double& x = params[t]->data()[i];
      const double saved = x;
      x = saved + h;
      const double up = loss();
      x = saved - h;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2 * h);
      r.max_rel_err = std::max(r.max_rel_err, rel_err(grads[t]->data()[i], numeric));
      ++r.checked;
    }
  }
  return r;
}

/// Same central differences, evaluated in extended precision: `params` are
/// long double mirrors of the tensors whose 64-bit analytic gradients are in
/// `grads`. Keeps oracle round-off far below the 1e-6 tolerance for entries
/// whose true gradient is tiny.
inline GradCheckResult grad_check_ext(const std::vector<Matrix<long double>*>& params,
                                      const std::vector<Matrix<double>*>& grads,
                                      const std::function<long double()>& loss, long double h = 1e-6L) {
  GradCheckResult r;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t]->size(); ++i) {
      long double& x = params[t]->data()[i];
      const long double saved = x;
      x = saved + h;
      const long double up = loss();
      x = saved - h;
      const long double down = loss();
      x = saved;
      const double numeric = static_cast<double>((up - down) / (2 * h));
      r.max_rel_err = std::max(r.max_rel_err, rel_err(grads[t]->data()[i], numeric));
      ++r.checked;
    }
  }
  return r;
}

template <typename T, typename P>
std::vector<Matrix<T>*> tensor_list(P& p) {
  std::vector<Matrix<T>*> out;
  p.visit([&](Matrix<T>& m) { out.push_back(&m); });
  return out;
}

template <typename A, typename B>
void copy_values(const std::vector<Matrix<A>*>& src, const std::vector<Matrix<B>*>& dst) {
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<B>();
}

/// Σ y∘w, the scalar probe used to pull gradients out of matrix outputs.
template <typename T>
T weighted_sum(const Matrix<T>& y, const Matrix<T>& w) {
  T l = 0;
  for (std::size_t i = 0; i < y.size(); ++i) l += y.data()[i] * w.data()[i];
  return l;
}

/// AUROC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
inline double auroc_pairs(const std::vector<bool>& pos, const std::vector<double>& s) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

/// AP from the explicit PR curve: one point per distinct threshold t
/// (predict positive iff score >= t), scanned from the highest t down.
inline double ap_pr_curve(const std::vector<bool>& pos, const std::vector<double>& s) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.rbegin(), thresholds.rend());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const double n_pos = static_cast<double>(std::count(pos.begin(), pos.end(), true));
  double ap = 0, prev_recall = 0;
  for (double t : thresholds) {
    double tp = 0, predicted = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < t) continue;
      predicted += 1;
      tp += pos[i] ? 1 : 0;
    }
    ap += (tp / n_pos - prev_recall) * (tp / predicted);
    prev_recall = tp / n_pos;
  }
  return ap;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("romil_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace romil::testing
