// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "romil/attention.hpp"
#include "romil/error.hpp"
#include "romil/matrix.hpp"
#include "romil/ops.hpp"

namespace romil {

template <typename T>
struct PoolOutput {
  Matrix<T> z;       // slide embedding, 1×dz
  Matrix<T> alpha;   // heads×N, zero on masked instances
  Matrix<T> logits;  // 1×K
  std::vector<std::size_t> critical;  // DSMIL only: critical instance per class
};

// ---------------------------------------------------------------------------
// ABMIL: a learnable class token attends over instance keys; the pooled
// representation is the α-weighted sum of the instance features themselves.
// ---------------------------------------------------------------------------

template <typename T>
struct AbmilParams {
  Matrix<T> class_token;  // 1×d
  LinearParams<T> key;    // d×d
  LinearParams<T> classifier;  // d×K
  std::size_t n_heads = 1;

  AbmilParams() = default;
  AbmilParams(std::size_t d, std::size_t heads, std::size_t n_classes)
      : class_token(1, d), key(d, d), classifier(d, n_classes), n_heads(heads) {
    if (heads == 0 || d % heads != 0) {
      throw ConfigError("ABMIL width " + std::to_string(d) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
  }

  std::size_t d_model() const { return class_token.cols(); }

  template <typename F>
  void visit(F&& f) {
    f(class_token);
    key.visit(f);
    classifier.visit(f);
  }
};

template <typename T>
struct AbmilCache {
  Matrix<T> h;     // masked rows zeroed
  Matrix<T> keys;  // N×d
  Matrix<T> alpha;
  Matrix<T> z;
  std::vector<bool> mask;
};

template <typename T>
PoolOutput<T> abmil_pool(const Matrix<T>& h_in, const AbmilParams<T>& p,
                         const std::vector<bool>& mask, AbmilCache<T>* cache = nullptr) {
  const std::size_t d = p.d_model(), nh = p.n_heads, dh = d / nh, n = h_in.rows();
  if (h_in.cols() != d) {
    throw DimensionError("abmil: instance width " + std::to_string(h_in.cols()) + " vs " +
                         std::to_string(d));
  }
  Matrix<T> h = zero_masked_rows(h_in, mask);
  Matrix<T> keys = linear_forward(h, p.key);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  PoolOutput<T> out{Matrix<T>(1, d), Matrix<T>(nh, n), {}, {}};
  for (std::size_t hd = 0; hd < nh; ++hd) {
    Matrix<T> scores(1, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      T s = 0;
      for (std::size_t c = 0; c < dh; ++c) s += p.class_token(0, hd * dh + c) * keys(i, hd * dh + c);
      scores(0, i) = s * scale;
    }
    auto sm = masked_row_softmax(scores, mask);
    if (!sm.degenerate_rows.empty()) throw ValidationError("empty bag: no unmasked instance");
    for (std::size_t i = 0; i < n; ++i) {
      out.alpha(hd, i) = sm.probs(0, i);
      if (!mask[i]) continue;
      for (std::size_t c = 0; c < dh; ++c) out.z(0, hd * dh + c) += sm.probs(0, i) * h(i, hd * dh + c);
    }
  }
  out.logits = linear_forward(out.z, p.classifier);
  if (cache) {
    cache->h = std::move(h);
    cache->keys = std::move(keys);
    cache->alpha = out.alpha;
    cache->z = out.z;
    cache->mask = mask;
  }
  return out;
}

template <typename T>
Matrix<T> abmil_backward(const AbmilCache<T>& c, const AbmilParams<T>& p, const Matrix<T>& dlogits,
                         AbmilParams<T>& g) {
  const std::size_t d = p.d_model(), nh = p.n_heads, dh = d / nh, n = c.h.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Matrix<T> dz = linear_backward(c.z, p.classifier, dlogits, g.classifier);
  Matrix<T> dh_mat(n, d);
  Matrix<T> dkeys(n, d);
  for (std::size_t hd = 0; hd < nh; ++hd) {
    Matrix<T> alpha(1, n), dalpha(1, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!c.mask[i]) continue;
      alpha(0, i) = c.alpha(hd, i);
      T s = 0;
      for (std::size_t k = 0; k < dh; ++k) {
        s += dz(0, hd * dh + k) * c.h(i, hd * dh + k);
        dh_mat(i, hd * dh + k) += alpha(0, i) * dz(0, hd * dh + k);
      }
      dalpha(0, i) = s;
    }
    const Matrix<T> ds = softmax_backward(alpha, dalpha);
    for (std::size_t i = 0; i < n; ++i) {
      if (!c.mask[i]) continue;
      const T dsi = ds(0, i) * scale;
      for (std::size_t k = 0; k < dh; ++k) {
        g.class_token(0, hd * dh + k) += dsi * c.keys(i, hd * dh + k);
        dkeys(i, hd * dh + k) += dsi * p.class_token(0, hd * dh + k);
      }
    }
  }
  dh_mat += linear_backward(c.h, p.key, zero_masked_rows(dkeys, c.mask), g.key);
  return zero_masked_rows(dh_mat, c.mask);
}

// ---------------------------------------------------------------------------
// DSMIL: an instance classifier picks, per class, the critical instance; its
// query attends over all instance queries to pool the instance values. Final
// logits average the instance-stream max score and the bag-stream classifier.
// ---------------------------------------------------------------------------

template <typename T>
struct DsmilParams {
  LinearParams<T> instance_classifier;  // d×K
  LinearParams<T> query;                // d×d, tanh
  LinearParams<T> value;                // d×d
  LinearParams<T> bag_classifier;       // (K·d)×K

  DsmilParams() = default;
  DsmilParams(std::size_t d, std::size_t n_classes)
      : instance_classifier(d, n_classes),
        query(d, d),
        value(d, d),
        bag_classifier(n_classes * d, n_classes) {}

  std::size_t d_model() const { return value.in_dim(); }
  std::size_t n_classes() const { return instance_classifier.out_dim(); }

  template <typename F>
  void visit(F&& f) {
    instance_classifier.visit(f);
    query.visit(f);
    value.visit(f);
    bag_classifier.visit(f);
  }
};

template <typename T>
struct DsmilCache {
  Matrix<T> h;
  Matrix<T> queries;  // tanh applied
  Matrix<T> values;
  Matrix<T> alpha;    // K×N
  Matrix<T> z;        // 1×(K·d)
  std::vector<std::size_t> critical;
  std::vector<bool> mask;
};

/// Index of the largest unmasked entry of column `col`; lowest index wins ties.
template <typename T>
std::size_t critical_instance(const Matrix<T>& scores, std::size_t col,
                              const std::vector<bool>& mask) {
  std::size_t best = scores.rows();
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    if (!mask[i]) continue;
    if (best == scores.rows() || scores(i, col) > scores(best, col)) best = i;
  }
  if (best == scores.rows()) throw ValidationError("empty bag: no unmasked instance");
  return best;
}

template <typename T>
PoolOutput<T> dsmil_pool(const Matrix<T>& h_in, const DsmilParams<T>& p,
                         const std::vector<bool>& mask, DsmilCache<T>* cache = nullptr) {
  const std::size_t d = p.d_model(), K = p.n_classes(), n = h_in.rows();
  if (h_in.cols() != d) {
    throw DimensionError("dsmil: instance width " + std::to_string(h_in.cols()) + " vs " +
                         std::to_string(d));
  }
  if (mask.size() != n) throw DimensionError("dsmil: mask length does not match instances");
  Matrix<T> h = zero_masked_rows(h_in, mask);
  const Matrix<T> inst = linear_forward(h, p.instance_classifier);
  Matrix<T> queries = linear_forward(h, p.query);
  for (T& v : queries.values()) v = std::tanh(v);
  Matrix<T> values = linear_forward(h, p.value);
  const std::size_t dq = queries.cols();
  const T scale = T(1) / std::sqrt(static_cast<T>(dq));

  PoolOutput<T> out{Matrix<T>(1, K * d), Matrix<T>(K, n), {}, {}};
  Matrix<T> max_scores(1, K);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t m = critical_instance(inst, k, mask);
    out.critical.push_back(m);
    max_scores(0, k) = inst(m, k);
    Matrix<T> scores(1, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      T s = 0;
      for (std::size_t c = 0; c < dq; ++c) s += queries(i, c) * queries(m, c);
      scores(0, i) = s * scale;
    }
    const Matrix<T> a = masked_row_softmax(scores, mask).probs;
    for (std::size_t i = 0; i < n; ++i) {
      out.alpha(k, i) = a(0, i);
      if (!mask[i]) continue;
      for (std::size_t c = 0; c < d; ++c) out.z(0, k * d + c) += a(0, i) * values(i, c);
    }
  }
  out.logits = linear_forward(out.z, p.bag_classifier);
  out.logits += max_scores;
  out.logits *= T(0.5);
  if (cache) {
    cache->h = std::move(h);
    cache->queries = std::move(queries);
    cache->values = std::move(values);
    cache->alpha = out.alpha;
    cache->z = out.z;
    cache->critical = out.critical;
    cache->mask = mask;
  }
  return out;
}

template <typename T>
Matrix<T> dsmil_backward(const DsmilCache<T>& c, const DsmilParams<T>& p, const Matrix<T>& dlogits,
                         DsmilParams<T>& g) {
  const std::size_t d = p.d_model(), K = p.n_classes(), n = c.h.rows(), dq = c.queries.cols();
  const T scale = T(1) / std::sqrt(static_cast<T>(dq));
  Matrix<T> half = dlogits;
  half *= T(0.5);
  const Matrix<T> dz = linear_backward(c.z, p.bag_classifier, half, g.bag_classifier);
  Matrix<T> dinst(n, K), dq_mat(n, dq), dv(n, d);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t m = c.critical[k];
    dinst(m, k) += half(0, k);
    Matrix<T> alpha(1, n), dalpha(1, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!c.mask[i]) continue;
      alpha(0, i) = c.alpha(k, i);
      T s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        s += dz(0, k * d + j) * c.values(i, j);
        dv(i, j) += alpha(0, i) * dz(0, k * d + j);
      }
      dalpha(0, i) = s;
    }
    const Matrix<T> ds = softmax_backward(alpha, dalpha);
    for (std::size_t i = 0; i < n; ++i) {
      if (!c.mask[i]) continue;
      const T dsi = ds(0, i) * scale;
      for (std::size_t j = 0; j < dq; ++j) {
        dq_mat(i, j) += dsi * c.queries(m, j);
        dq_mat(m, j) += dsi * c.queries(i, j);
      }
    }
  }
  for (std::size_t i = 0; i < dq_mat.size(); ++i) {
    const T qv = c.queries.data()[i];
    dq_mat.data()[i] *= T(1) - qv * qv;
  }
  Matrix<T> dh = linear_backward(c.h, p.instance_classifier, dinst, g.instance_classifier);
  dh += linear_backward(c.h, p.query, zero_masked_rows(dq_mat, c.mask), g.query);
  dh += linear_backward(c.h, p.value, zero_masked_rows(dv, c.mask), g.value);
  return zero_masked_rows(dh, c.mask);
}

}  // namespace romil
