// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "romil/error.hpp"
#include "romil/matrix.hpp"

namespace romil {

// ---------------------------------------------------------------------------
// Masked softmax
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxResult {
  Matrix<T> probs;
  /// Rows whose every position was masked. They are all-zero in `probs`; the
  /// caller decides whether that is an error.
  std::vector<std::size_t> degenerate_rows;
};

/// Row-wise softmax over unmasked columns. Masked columns are never read, so
/// they may hold NaN.
template <typename T>
SoftmaxResult<T> masked_row_softmax(const Matrix<T>& scores, const std::vector<bool>& mask) {
  if (mask.size() != scores.cols()) {
    throw DimensionError("masked_row_softmax: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(scores.cols()) + " columns");
  }
  SoftmaxResult<T> res{Matrix<T>(scores.rows(), scores.cols()), {}};
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto s = scores.row(i);
    auto p = res.probs.row(i);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < s.size(); ++j)
      if (mask[j]) mx = std::max(mx, s[j]);
    if (mx == -std::numeric_limits<T>::infinity()) {
      res.degenerate_rows.push_back(i);
      continue;
    }
    T denom = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!mask[j]) continue;
      p[j] = std::exp(s[j] - mx);
      denom += p[j];
    }
    for (std::size_t j = 0; j < s.size(); ++j)
      if (mask[j]) p[j] /= denom;
  }
  return res;
}

/// Gradient of a row softmax given its output: dS = P ⊙ (dP − rowsum(dP ⊙ P)).
/// Masked entries have P = 0, so they receive zero gradient.
template <typename T>
Matrix<T> softmax_backward(const Matrix<T>& probs, const Matrix<T>& dprobs) {
  Matrix<T>::require_same_shape(probs, dprobs, "softmax_backward");
  Matrix<T> ds(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto p = probs.row(i);
    auto dp = dprobs.row(i);
    T dot = 0;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (p[j] != T(0)) dot += p[j] * dp[j];
    auto out = ds.row(i);
    for (std::size_t j = 0; j < p.size(); ++j)
      if (p[j] != T(0)) out[j] = p[j] * (dp[j] - dot);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Layer normalization (population variance)
// ---------------------------------------------------------------------------

template <typename T>
struct LayerNormParams {
  Matrix<T> gamma;  // 1×d
  Matrix<T> beta;   // 1×d

  static LayerNormParams identity(std::size_t d) {
    return {Matrix<T>(1, d, T(1)), Matrix<T>(1, d, T(0))};
  }
  template <typename F>
  void visit(F&& f) {
    f(gamma);
    f(beta);
  }
};

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta, T eps,
                     LayerNormCache<T>* cache = nullptr) {
  const std::size_t d = x.cols();
  if (gamma.cols() != d || beta.cols() != d || gamma.rows() != 1 || beta.rows() != 1) {
    throw DimensionError("layer_norm: gamma/beta " + gamma.shape_str() + "/" + beta.shape_str() +
                         " do not match input " + x.shape_str());
  }
  if (!(eps > T(0))) throw ArgumentError("layer_norm: eps must be positive");
  Matrix<T> y(x.rows(), d);
  if (cache) {
    cache->xhat = Matrix<T>(x.rows(), d);
    cache->inv_std.assign(x.rows(), T(0));
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    T mean = 0;
    for (T v : r) mean += v;
    mean /= static_cast<T>(d);
    T var = 0;
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (r[j] - mean) * inv;
      y(i, j) = xh * gamma(0, j) + beta(0, j);
      if (cache) cache->xhat(i, j) = xh;
    }
    if (cache) cache->inv_std[i] = inv;
  }
  return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const LayerNormCache<T>& cache, const Matrix<T>& gamma,
                              const Matrix<T>& dy, LayerNormParams<T>& grads) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Matrix<T> dx(n, d);
  std::vector<T> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    T sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T g = dy(i, j);
      grads.gamma(0, j) += g * cache.xhat(i, j);
      grads.beta(0, j) += g;
      dxhat[j] = g * gamma(0, j);
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * cache.xhat(i, j);
    }
    const T scale = cache.inv_std[i] / static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx(i, j) = scale * (static_cast<T>(d) * dxhat[j] - sum_dxhat -
                          cache.xhat(i, j) * sum_dxhat_xhat);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GELU (exact, erf form)
// ---------------------------------------------------------------------------

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

template <typename T>
Matrix<T> gelu(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = gelu(x.data()[i]);
  return y;
}

/// dx = dy ⊙ gelu'(pre).
template <typename T>
Matrix<T> gelu_backward(const Matrix<T>& pre, const Matrix<T>& dy) {
  Matrix<T> dx(pre.rows(), pre.cols());
  for (std::size_t i = 0; i < pre.size(); ++i)
    dx.data()[i] = dy.data()[i] * gelu_derivative(pre.data()[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Cross-entropy on logits
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
  T loss;
  Matrix<T> dlogits;  // softmax(logits) − onehot(label)
};

template <typename T>
LossResult<T> cross_entropy_loss(const Matrix<T>& logits, std::size_t label) {
  if (logits.rows() != 1) throw DimensionError("cross_entropy_loss: logits must be 1xK");
  const std::size_t k = logits.cols();
  if (label >= k) {
    throw ArgumentError("cross_entropy_loss: label " + std::to_string(label) +
                        " out of range for " + std::to_string(k) + " classes");
  }
  T mx = logits(0, 0);
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(0, j));
  T denom = 0;
  for (std::size_t j = 0; j < k; ++j) denom += std::exp(logits(0, j) - mx);
  const T log_z = mx + std::log(denom);
  LossResult<T> res{log_z - logits(0, label), Matrix<T>(1, k)};
  for (std::size_t j = 0; j < k; ++j) res.dlogits(0, j) = std::exp(logits(0, j) - log_z);
  res.dlogits(0, label) -= T(1);
  return res;
}

template <typename T>
std::vector<T> softmax_probs(const Matrix<T>& logits) {
  std::vector<T> p(logits.cols());
  T mx = logits(0, 0);
  for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(0, j));
  T denom = 0;
  for (std::size_t j = 0; j < p.size(); ++j) denom += (p[j] = std::exp(logits(0, j) - mx));
  for (T& v : p) v /= denom;
  return p;
}

// ---------------------------------------------------------------------------
// Affine layer
// ---------------------------------------------------------------------------

template <typename T>
struct LinearParams {
  Matrix<T> weight;  // in×out
  Matrix<T> bias;    // 1×out, empty when the layer has no bias

  LinearParams() = default;
  LinearParams(std::size_t in, std::size_t out, bool with_bias = true)
      : weight(in, out), bias(with_bias ? Matrix<T>(1, out) : Matrix<T>()) {}

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  bool has_bias() const { return !bias.empty(); }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    if (has_bias()) f(bias);
  }
};

template <typename T>
Matrix<T> linear_forward(const Matrix<T>& x, const LinearParams<T>& p) {
  Matrix<T> y = matmul(x, p.weight);
  if (p.has_bias()) add_row_broadcast(y, p.bias);
  return y;
}

/// Accumulates dW, db into `grads` and returns dX.
template <typename T>
Matrix<T> linear_backward(const Matrix<T>& x, const LinearParams<T>& p, const Matrix<T>& dy,
                          LinearParams<T>& grads) {
  matmul_tn_acc(x, dy, grads.weight);
  if (p.has_bias()) add_colsum(dy, grads.bias);
  return matmul_nt(dy, p.weight);
}

}  // namespace romil
