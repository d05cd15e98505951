// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "romil/attention.hpp"
#include "romil/error.hpp"
#include "romil/matrix.hpp"
#include "romil/ops.hpp"
#include "romil/posenc.hpp"

namespace romil {

/// Which positional signal the encoder sees: none, absolute sin-cos added to
/// the tokens, rotary on queries/keys, or both.
enum class PosencMode { none, abs, rope, rope_abs };

inline bool uses_abs(PosencMode m) { return m == PosencMode::abs || m == PosencMode::rope_abs; }
inline bool uses_rope(PosencMode m) { return m == PosencMode::rope || m == PosencMode::rope_abs; }

inline const char* to_string(PosencMode m) {
  switch (m) {
    case PosencMode::none: return "none";
    case PosencMode::abs: return "abs";
    case PosencMode::rope: return "rope";
    case PosencMode::rope_abs: return "rope+abs";
  }
  return "?";
}

inline PosencMode parse_posenc(const std::string& s) {
  if (s == "none") return PosencMode::none;
  if (s == "abs") return PosencMode::abs;
  if (s == "rope") return PosencMode::rope;
  if (s == "rope+abs") return PosencMode::rope_abs;
  throw ConfigError("unknown positional encoding '" + s + "' (none, abs, rope, rope+abs)");
}

constexpr double kLayerNormEps = 1e-5;

/// Pre-norm transformer block: x + MHSA(LN(x)), then x + FFN(LN(x)) with a
/// GELU between the two FFN projections.
template <typename T>
struct EncoderParams {
  LayerNormParams<T> ln1;
  MhsaParams<T> mhsa;
  LayerNormParams<T> ln2;
  LinearParams<T> ffn_in;   // d×(r·d)
  LinearParams<T> ffn_out;  // (r·d)×d
  std::size_t expansion = 4;

  EncoderParams() = default;
  EncoderParams(std::size_t d_model, std::size_t heads, std::size_t r)
      : ln1(LayerNormParams<T>::identity(d_model)),
        mhsa(d_model, heads),
        ln2(LayerNormParams<T>::identity(d_model)),
        ffn_in(d_model, r * d_model),
        ffn_out(r * d_model, d_model),
        expansion(r) {
    if (r == 0) throw ConfigError("FFN expansion must be >= 1");
  }

  std::size_t d_model() const { return mhsa.d_model(); }

  template <typename F>
  void visit(F&& f) {
    ln1.visit(f);
    mhsa.visit(f);
    ln2.visit(f);
    ffn_in.visit(f);
    ffn_out.visit(f);
  }
};

/// Closed-form parameter count of one block: 4d² attention, 2rd² + (r+1)d FFN,
/// 4d layer norm.
constexpr std::size_t encoder_param_count(std::size_t d, std::size_t r) {
  return 4 * d * d + 2 * r * d * d + r * d + d + 4 * d;
}

template <typename T>
struct EncoderCache {
  LayerNormCache<T> ln1;
  Matrix<T> ln1_out;
  MhsaCache<T> mhsa;
  Matrix<T> h1;
  LayerNormCache<T> ln2;
  Matrix<T> ln2_out;
  Matrix<T> ffn_pre;
  Matrix<T> ffn_act;
  std::vector<bool> mask;
};

struct EncoderOptions {
  PosencMode posenc = PosencMode::rope;
  AttentionOptions attention;
};

namespace detail {

template <typename T>
Matrix<T> encoder_block(const Matrix<T>& x_in, const EncoderParams<T>& p,
                        const std::vector<GridCoord>& coords, const std::vector<bool>& mask,
                        const EncoderOptions& opt, EncoderCache<T>* cache) {
  const T eps = static_cast<T>(kLayerNormEps);
  Matrix<T> x = zero_masked_rows(x_in, mask);
  AttentionOptions att = opt.attention;
  att.rope = uses_rope(opt.posenc);

  LayerNormCache<T> ln1c, ln2c;
  Matrix<T> a = layer_norm(x, p.ln1.gamma, p.ln1.beta, eps, cache ? &ln1c : nullptr);
  Matrix<T> m = mhsa_forward(a, p.mhsa, coords, mask, att, cache ? &cache->mhsa : nullptr);
  Matrix<T> h1 = x;
  h1 += m;
  Matrix<T> b = layer_norm(h1, p.ln2.gamma, p.ln2.beta, eps, cache ? &ln2c : nullptr);
  Matrix<T> pre = linear_forward(b, p.ffn_in);
  Matrix<T> act = gelu(pre);
  Matrix<T> y = h1;
  y += linear_forward(act, p.ffn_out);
  y = zero_masked_rows(y, mask);
  if (cache) {
    cache->ln1 = std::move(ln1c);
    cache->ln1_out = std::move(a);
    cache->h1 = std::move(h1);
    cache->ln2 = std::move(ln2c);
    cache->ln2_out = std::move(b);
    cache->ffn_pre = std::move(pre);
    cache->ffn_act = std::move(act);
    cache->mask = mask;
  }
  return y;
}

template <typename T>
Matrix<T> encoder_block_backward(const EncoderCache<T>& c, const EncoderParams<T>& p,
                                 const Matrix<T>& dy_in, EncoderParams<T>& g) {
  const Matrix<T> dy = zero_masked_rows(dy_in, c.mask);
  const Matrix<T> dact = linear_backward(c.ffn_act, p.ffn_out, dy, g.ffn_out);
  const Matrix<T> dpre = gelu_backward(c.ffn_pre, dact);
  const Matrix<T> db = linear_backward(c.ln2_out, p.ffn_in, dpre, g.ffn_in);
  Matrix<T> dh1 = dy;
  dh1 += layer_norm_backward(c.ln2, p.ln2.gamma, db, g.ln2);
  const Matrix<T> da = mhsa_backward(c.mhsa, p.mhsa, dh1, g.mhsa);
  Matrix<T> dx = dh1;
  dx += layer_norm_backward(c.ln1, p.ln1.gamma, da, g.ln1);
  return zero_masked_rows(dx, c.mask);
}

}  // namespace detail

/// One RoFormer layer. When the mode includes `abs`, the absolute sin-cos
/// table is added to the tokens before the block.
template <typename T>
Matrix<T> roformer_layer_forward(const Matrix<T>& x, const EncoderParams<T>& p,
                                 const std::vector<GridCoord>& coords,
                                 const std::vector<bool>& mask, const EncoderOptions& opt,
                                 EncoderCache<T>* cache = nullptr) {
  if (x.cols() != p.d_model()) {
    throw DimensionError("encoder: input width " + std::to_string(x.cols()) + " vs d_model " +
                         std::to_string(p.d_model()));
  }
  if (!uses_abs(opt.posenc)) return detail::encoder_block(x, p, coords, mask, opt, cache);
  Matrix<T> xa = x;
  xa += sincos_abs_2d<T>(coords, x.cols());
  return detail::encoder_block(xa, p, coords, mask, opt, cache);
}

/// Backward of `roformer_layer_forward`; the absolute table is additive so it
/// passes the gradient through unchanged.
template <typename T>
Matrix<T> roformer_layer_backward(const EncoderCache<T>& c, const EncoderParams<T>& p,
                                  const Matrix<T>& dy, EncoderParams<T>& grads) {
  return detail::encoder_block_backward(c, p, dy, grads);
}

/// Stack of blocks sharing one positional mode; the absolute table (if any) is
/// added once, before the first block.
template <typename T>
Matrix<T> encoder_stack_forward(const Matrix<T>& x, const std::vector<EncoderParams<T>>& layers,
                                const std::vector<GridCoord>& coords,
                                const std::vector<bool>& mask, const EncoderOptions& opt,
                                std::vector<EncoderCache<T>>* caches = nullptr) {
  if (caches) caches->assign(layers.size(), EncoderCache<T>{});
  Matrix<T> h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    EncoderOptions lo = opt;
    if (l > 0 && uses_abs(opt.posenc))
      lo.posenc = uses_rope(opt.posenc) ? PosencMode::rope : PosencMode::none;
    h = roformer_layer_forward(h, layers[l], coords, mask, lo, caches ? &(*caches)[l] : nullptr);
  }
  return h;
}

template <typename T>
Matrix<T> encoder_stack_backward(const std::vector<EncoderCache<T>>& caches,
                                 const std::vector<EncoderParams<T>>& layers, const Matrix<T>& dy,
                                 std::vector<EncoderParams<T>>& grads) {
  Matrix<T> d = dy;
  for (std::size_t l = layers.size(); l-- > 0;)
    d = roformer_layer_backward(caches[l], layers[l], d, grads[l]);
  return d;
}

}  // namespace romil
