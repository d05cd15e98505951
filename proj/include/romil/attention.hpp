// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "romil/error.hpp"
#include "romil/grid.hpp"
#include "romil/matrix.hpp"
#include "romil/ops.hpp"
#include "romil/posenc.hpp"

namespace romil {

enum class AttentionKernel { naive, streaming };

inline const char* to_string(AttentionKernel k) {
  return k == AttentionKernel::naive ? "naive" : "streaming";
}

/// Scratch space for the streaming kernel. All buffers are sized by the chunk
/// sizes and head width, never by the sequence length.
///
/// Every buffer the kernel touches lives here, so `peak_bytes()` is the
/// kernel's entire scratch footprint.
template <typename T>
class AttentionWorkspace {
 public:
  explicit AttentionWorkspace(std::size_t query_chunk = 128, std::size_t key_chunk = 128)
      : query_chunk_(query_chunk), key_chunk_(key_chunk) {
    if (query_chunk == 0 || key_chunk == 0) {
      throw ConfigError("attention chunk sizes must be >= 1");
    }
  }

  std::size_t query_chunk() const { return query_chunk_; }
  std::size_t key_chunk() const { return key_chunk_; }

  /// Largest scratch footprint observed across kernel calls, in bytes.
  std::size_t peak_bytes() const { return peak_bytes_; }
  void reset_peak() { peak_bytes_ = 0; }

  // Bytes the kernel would need for the given shape; independent of N once
  // N exceeds both chunk sizes.
  static std::size_t scratch_bytes_for(std::size_t n, std::size_t head_dim, std::size_t bq,
                                       std::size_t bk) {
    const std::size_t q = std::min(bq, n), k = std::min(bk, n);
    return sizeof(T) * (q * k + head_dim * k + q * head_dim + 2 * q);
  }

 private:
  template <typename U>
  friend Matrix<U> attend_streaming(const Matrix<U>&, const Matrix<U>&, const Matrix<U>&,
                                    const std::vector<bool>&, U, AttentionWorkspace<U>&);

  void prepare(std::size_t n, std::size_t head_dim) {
    const std::size_t q = std::min(query_chunk_, n), k = std::min(key_chunk_, n);
    scores.assign(q * k, T(0));
    keys_t.assign(head_dim * k, T(0));
    acc.assign(q * head_dim, T(0));
    run_max.assign(q, T(0));
    run_sum.assign(q, T(0));
    const std::size_t bytes =
        sizeof(T) * (scores.capacity() + keys_t.capacity() + acc.capacity() +
                     run_max.capacity() + run_sum.capacity());
    peak_bytes_ = std::max(peak_bytes_, bytes);
  }

  std::size_t query_chunk_;
  std::size_t key_chunk_;
  std::size_t peak_bytes_ = 0;
  std::vector<T> scores;   // B_q×B_k
  std::vector<T> keys_t;   // head_dim×B_k
  std::vector<T> acc;      // B_q×head_dim
  std::vector<T> run_max;  // B_q
  std::vector<T> run_sum;  // B_q
};

namespace detail {

inline std::vector<std::size_t> valid_indices(const std::vector<bool>& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  return idx;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& a, const std::vector<std::size_t>& idx) {
  Matrix<T> out(idx.size(), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(a.row(idx[r]).data(), a.cols(), out.row(r).data());
  return out;
}

template <typename T>
void scatter_rows(const Matrix<T>& compact, const std::vector<std::size_t>& idx, Matrix<T>& out) {
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(compact.row(r).data(), compact.cols(), out.row(idx[r]).data());
}

template <typename T>
void check_attention_shapes(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                            const std::vector<bool>& mask) {
  if (!q.same_shape(k) || q.rows() != v.rows() || mask.size() != q.rows()) {
    throw DimensionError("attention: Q " + q.shape_str() + ", K " + k.shape_str() + ", V " +
                         v.shape_str() + ", mask " + std::to_string(mask.size()));
  }
}

// Naive attention over the compacted (unmasked) rows; returns probabilities
// so the training path can differentiate through them.
template <typename T>
struct CompactAttention {
  std::vector<std::size_t> idx;
  Matrix<T> probs;  // n_valid×n_valid
  Matrix<T> out;    // N×d_v, zero on masked rows
};

template <typename T>
CompactAttention<T> attend_naive_compact(const Matrix<T>& q, const Matrix<T>& k,
                                         const Matrix<T>& v, const std::vector<bool>& mask,
                                         T scale) {
  check_attention_shapes(q, k, v, mask);
  CompactAttention<T> res;
  res.idx = valid_indices(mask);
  if (res.idx.empty()) throw ValidationError("empty attention context: every key is masked");
  const Matrix<T> qc = gather_rows(q, res.idx);
  const Matrix<T> kc = gather_rows(k, res.idx);
  const Matrix<T> vc = gather_rows(v, res.idx);
  Matrix<T> scores = matmul_nt(qc, kc);
  scores *= scale;
  res.probs = masked_row_softmax(scores, std::vector<bool>(res.idx.size(), true)).probs;
  res.out = Matrix<T>(q.rows(), v.cols());
  scatter_rows(matmul(res.probs, vc), res.idx, res.out);
  return res;
}

}  // namespace detail

/// Quadratic reference: softmax(scale·QKᵀ, masked keys at −∞)·V. Masked query
/// rows produce zero rows; masked rows of Q/K/V are never read.
template <typename T>
Matrix<T> attend_naive(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                       const std::vector<bool>& mask, T scale) {
  return detail::attend_naive_compact(q, k, v, mask, scale).out;
}

/// Exact attention in query×key tiles with an online softmax (running row max
/// and denominator, rescaled accumulator). Scratch is bounded by the
/// workspace's chunk sizes.
template <typename T>
Matrix<T> attend_streaming(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           const std::vector<bool>& mask, T scale, AttentionWorkspace<T>& ws) {
  detail::check_attention_shapes(q, k, v, mask);
  const std::size_t n = q.rows(), dh = q.cols(), dv = v.cols();
  if (dv != dh) throw DimensionError("attend_streaming: V width must equal head width");
  if (std::find(mask.begin(), mask.end(), true) == mask.end()) {
    throw ValidationError("empty attention context: every key is masked");
  }
  constexpr T neg_inf = -std::numeric_limits<T>::infinity();
  ws.prepare(n, dh);
  const std::size_t bq = std::min(ws.query_chunk(), n), bk = std::min(ws.key_chunk(), n);
  Matrix<T> out(n, dv);

  for (std::size_t q0 = 0; q0 < n; q0 += bq) {
    const std::size_t qn = std::min(bq, n - q0);
    std::fill(ws.run_max.begin(), ws.run_max.end(), neg_inf);
    std::fill(ws.run_sum.begin(), ws.run_sum.end(), T(0));
    std::fill(ws.acc.begin(), ws.acc.end(), T(0));

    for (std::size_t k0 = 0; k0 < n; k0 += bk) {
      const std::size_t kn = std::min(bk, n - k0);
      // Transposed key tile so the score loop runs unit-stride over keys.
      for (std::size_t j = 0; j < kn; ++j) {
        const bool live = mask[k0 + j];
        for (std::size_t c = 0; c < dh; ++c) ws.keys_t[c * kn + j] = live ? k(k0 + j, c) : T(0);
      }
      for (std::size_t i = 0; i < qn; ++i) {
        if (!mask[q0 + i]) continue;
        T* s = ws.scores.data() + i * kn;
        std::fill(s, s + kn, T(0));
        for (std::size_t c = 0; c < dh; ++c) {
          const T qc = q(q0 + i, c);
          const T* kt = ws.keys_t.data() + c * kn;
          for (std::size_t j = 0; j < kn; ++j) s[j] += qc * kt[j];
        }
        T block_max = neg_inf;
        for (std::size_t j = 0; j < kn; ++j) {
          s[j] = mask[k0 + j] ? s[j] * scale : neg_inf;
          block_max = std::max(block_max, s[j]);
        }
        const T new_max = std::max(ws.run_max[i], block_max);
        if (new_max == neg_inf) continue;  // nothing live seen yet
        const T correction = std::exp(ws.run_max[i] - new_max);
        T* a = ws.acc.data() + i * dh;
        ws.run_sum[i] *= correction;
        for (std::size_t c = 0; c < dh; ++c) a[c] *= correction;
        for (std::size_t j = 0; j < kn; ++j) {
          if (!mask[k0 + j]) continue;
          const T p = std::exp(s[j] - new_max);
          ws.run_sum[i] += p;
          const auto vrow = v.row(k0 + j);
          for (std::size_t c = 0; c < dh; ++c) a[c] += p * vrow[c];
        }
        ws.run_max[i] = new_max;
      }
    }
    for (std::size_t i = 0; i < qn; ++i) {
      if (!mask[q0 + i]) continue;
      const T inv = T(1) / ws.run_sum[i];
      const T* a = ws.acc.data() + i * dh;
      for (std::size_t c = 0; c < dh; ++c) out(q0 + i, c) = a[c] * inv;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention
// ---------------------------------------------------------------------------

template <typename T>
struct MhsaParams {
  LinearParams<T> wq, wk, wv, wo;  // d_model×d_model, no bias
  std::size_t n_heads = 1;

  MhsaParams() = default;
  MhsaParams(std::size_t d_model, std::size_t heads)
      : wq(d_model, d_model, false),
        wk(d_model, d_model, false),
        wv(d_model, d_model, false),
        wo(d_model, d_model, false),
        n_heads(heads) {
    if (heads == 0 || d_model % heads != 0) {
      throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
  }

  std::size_t d_model() const { return wq.in_dim(); }
  std::size_t head_dim() const { return d_model() / n_heads; }

  template <typename F>
  void visit(F&& f) {
    wq.visit(f);
    wk.visit(f);
    wv.visit(f);
    wo.visit(f);
  }
};

struct AttentionOptions {
  bool rope = false;
  AttentionKernel kernel = AttentionKernel::naive;
  double rope_base = 10000.0;
  std::size_t query_chunk = 128;
  std::size_t key_chunk = 128;
};

template <typename T>
struct MhsaCache {
  Matrix<T> x;             // input with masked rows zeroed
  Matrix<T> q, k, v;       // projections; q/k rotated when RoPE is on
  Matrix<T> merged;        // heads concatenated, before W_o
  std::vector<detail::CompactAttention<T>> heads;
  std::vector<GridCoord> coords;
  std::vector<bool> mask;
  bool rope = false;
  double rope_base = 10000.0;
};

template <typename T>
Matrix<T> zero_masked_rows(const Matrix<T>& x, const std::vector<bool>& mask) {
  if (mask.size() != x.rows()) {
    throw DimensionError("mask length " + std::to_string(mask.size()) + " for " +
                         std::to_string(x.rows()) + " rows");
  }
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    if (mask[i]) std::copy_n(x.row(i).data(), x.cols(), out.row(i).data());
  return out;
}

namespace detail {

template <typename T>
void rotate_heads(Matrix<T>& m, std::size_t n_heads, const std::vector<GridCoord>& coords,
                  const RopeTable<T>& table, bool inverse) {
  const std::size_t dh = m.cols() / n_heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    Matrix<T> slice = slice_cols(m, h * dh, dh);
    rope_2d_inplace(slice, coords, table, inverse);
    for (std::size_t i = 0; i < m.rows(); ++i)
      std::copy_n(slice.row(i).data(), dh, m.row(i).data() + h * dh);
  }
}

}  // namespace detail

/// Masked multi-head self-attention: project, optionally rotate Q and K per
/// head, attend per head with the chosen kernel, merge, project out.
///
/// `cache` is only filled on the naive kernel; training differentiates
/// through that path.
template <typename T>
Matrix<T> mhsa_forward(const Matrix<T>& x_in, const MhsaParams<T>& p,
                       const std::vector<GridCoord>& coords, const std::vector<bool>& mask,
                       const AttentionOptions& opt, MhsaCache<T>* cache = nullptr,
                       AttentionWorkspace<T>* ws = nullptr) {
  const std::size_t d = p.d_model(), nh = p.n_heads, dh = p.head_dim();
  if (x_in.cols() != d) {
    throw DimensionError("mhsa: input width " + std::to_string(x_in.cols()) + " vs d_model " +
                         std::to_string(d));
  }
  if (coords.size() != x_in.rows()) {
    throw DimensionError("mhsa: " + std::to_string(coords.size()) + " coordinates for " +
                         std::to_string(x_in.rows()) + " rows");
  }
  if (opt.rope && dh % 4 != 0) {
    throw ConfigError("RoPE needs head_dim divisible by 4, got " + std::to_string(dh));
  }
  if (cache && opt.kernel != AttentionKernel::naive) {
    throw ConfigError("gradients are only available through the naive attention kernel");
  }
  Matrix<T> x = zero_masked_rows(x_in, mask);
  Matrix<T> q = linear_forward(x, p.wq);
  Matrix<T> k = linear_forward(x, p.wk);
  Matrix<T> v = linear_forward(x, p.wv);
  if (opt.rope) {
    RopeTable<T> table(dh, opt.rope_base);
    detail::rotate_heads(q, nh, coords, table, false);
    detail::rotate_heads(k, nh, coords, table, false);
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Matrix<T> merged(x.rows(), d);
  std::optional<AttentionWorkspace<T>> local_ws;
  if (opt.kernel == AttentionKernel::streaming && !ws) {
    local_ws.emplace(opt.query_chunk, opt.key_chunk);
    ws = &*local_ws;
  }
  if (cache) cache->heads.clear();
  for (std::size_t h = 0; h < nh; ++h) {
    const Matrix<T> qh = slice_cols(q, h * dh, dh);
    const Matrix<T> kh = slice_cols(k, h * dh, dh);
    const Matrix<T> vh = slice_cols(v, h * dh, dh);
    Matrix<T> oh;
    if (opt.kernel == AttentionKernel::naive) {
      auto res = detail::attend_naive_compact(qh, kh, vh, mask, scale);
      oh = res.out;
      if (cache) cache->heads.push_back(std::move(res));
    } else {
      oh = attend_streaming(qh, kh, vh, mask, scale, *ws);
    }
    add_into_cols(merged, h * dh, oh);
  }
  Matrix<T> y = zero_masked_rows(linear_forward(merged, p.wo), mask);
  if (cache) {
    cache->x = std::move(x);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->merged = std::move(merged);
    cache->coords = coords;
    cache->mask = mask;
    cache->rope = opt.rope;
    cache->rope_base = opt.rope_base;
  }
  return y;
}

template <typename T>
Matrix<T> mhsa_backward(const MhsaCache<T>& c, const MhsaParams<T>& p, const Matrix<T>& dy_in,
                        MhsaParams<T>& grads) {
  const std::size_t d = p.d_model(), nh = p.n_heads, dh = p.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Matrix<T> dy = zero_masked_rows(dy_in, c.mask);
  const Matrix<T> dmerged = linear_backward(c.merged, p.wo, dy, grads.wo);
  const std::size_t n = dy.rows();
  Matrix<T> dq(n, d), dk(n, d), dv(n, d);
  for (std::size_t h = 0; h < nh; ++h) {
    const auto& head = c.heads[h];
    const Matrix<T> doc = detail::gather_rows(slice_cols(dmerged, h * dh, dh), head.idx);
    const Matrix<T> qc = detail::gather_rows(slice_cols(c.q, h * dh, dh), head.idx);
    const Matrix<T> kc = detail::gather_rows(slice_cols(c.k, h * dh, dh), head.idx);
    const Matrix<T> vc = detail::gather_rows(slice_cols(c.v, h * dh, dh), head.idx);
    const Matrix<T> dvc = matmul_tn(head.probs, doc);
    Matrix<T> ds = softmax_backward(head.probs, matmul_nt(doc, vc));
    ds *= scale;
    const Matrix<T> dqc = matmul(ds, kc);
    const Matrix<T> dkc = matmul_tn(ds, qc);
    Matrix<T> tmp(n, dh);
    detail::scatter_rows(dqc, head.idx, tmp);
    add_into_cols(dq, h * dh, tmp);
    tmp.fill(T(0));
    detail::scatter_rows(dkc, head.idx, tmp);
    add_into_cols(dk, h * dh, tmp);
    tmp.fill(T(0));
    detail::scatter_rows(dvc, head.idx, tmp);
    add_into_cols(dv, h * dh, tmp);
  }
  if (c.rope) {
    // Rotation is orthogonal: its adjoint is the inverse rotation.
    RopeTable<T> table(dh, c.rope_base);
    detail::rotate_heads(dq, nh, c.coords, table, true);
    detail::rotate_heads(dk, nh, c.coords, table, true);
  }
  Matrix<T> dx = linear_backward(c.x, p.wq, dq, grads.wq);
  dx += linear_backward(c.x, p.wk, dk, grads.wk);
  dx += linear_backward(c.x, p.wv, dv, grads.wv);
  return zero_masked_rows(dx, c.mask);
}

}  // namespace romil
