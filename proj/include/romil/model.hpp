// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "romil/attention.hpp"
#include "romil/encoder.hpp"
#include "romil/error.hpp"
#include "romil/grid.hpp"
#include "romil/matrix.hpp"
#include "romil/mil.hpp"
#include "romil/ops.hpp"

namespace romil {

enum class PoolHead { abmil, dsmil };

inline const char* to_string(PoolHead p) { return p == PoolHead::abmil ? "abmil" : "dsmil"; }

inline PoolHead parse_pool_head(const std::string& s) {
  if (s == "abmil") return PoolHead::abmil;
  if (s == "dsmil") return PoolHead::dsmil;
  throw ConfigError("unknown pooling head '" + s + "' (abmil, dsmil)");
}

/// Resolved model shape. `width` is the instance width after the input
/// projection; it equals d_model for every arm except the parity presets.
struct ModelConfig {
  std::size_t input_dim = 1024;
  std::size_t width = 512;
  std::size_t hidden_layers = 0;
  std::size_t encoder_layers = 0;
  PosencMode posenc = PosencMode::none;
  std::size_t n_heads = 8;
  std::size_t ffn_mult = 4;
  PoolHead pool = PoolHead::abmil;
  std::size_t pool_heads = 8;
  std::size_t n_classes = 2;
  double rope_base = 10000.0;
  AttentionKernel kernel = AttentionKernel::naive;
  std::size_t query_chunk = 128;
  std::size_t key_chunk = 128;
};

/// Knobs shared by every arm; the arm name decides the rest.
struct ModelBase {
  std::size_t input_dim = 1024;
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t pool_heads = 8;
  std::size_t ffn_mult = 4;
  std::size_t encoder_layers = 1;
  std::size_t n_classes = 2;
  double rope_base = 10000.0;
  AttentionKernel kernel = AttentionKernel::naive;
  std::size_t query_chunk = 128;
  std::size_t key_chunk = 128;
};

inline const std::vector<std::string>& model_arms() {
  static const std::vector<std::string> arms = {
      "abmil",       "ro-abmil",      "dsmil",      "ro-dsmil",  "transformer-abmil",
      "vit-abmil",   "rope+abs-abmil", "abmil-2.1M", "abmil-4.2M"};
  return arms;
}

inline std::string model_arms_joined() {
  std::string s;
  for (const auto& a : model_arms()) s += (s.empty() ? "" : ", ") + a;
  return s;
}

/// Arm name → (encoder on/off, positional mode, pooling head, width).
/// The parity presets double the width (and add two hidden layers for 4.2M).
inline ModelConfig arm_config(const std::string& arm, const ModelBase& b) {
  ModelConfig c;
  c.input_dim = b.input_dim;
  c.width = b.d_model;
  c.n_heads = b.n_heads;
  c.pool_heads = b.pool_heads;
  c.ffn_mult = b.ffn_mult;
  c.n_classes = b.n_classes;
  c.rope_base = b.rope_base;
  c.kernel = b.kernel;
  c.query_chunk = b.query_chunk;
  c.key_chunk = b.key_chunk;
  const std::size_t enc = b.encoder_layers;
  if (arm == "abmil") {
  } else if (arm == "ro-abmil") {
    c.encoder_layers = enc;
    c.posenc = PosencMode::rope;
  } else if (arm == "dsmil") {
    c.pool = PoolHead::dsmil;
  } else if (arm == "ro-dsmil") {
    c.pool = PoolHead::dsmil;
    c.encoder_layers = enc;
    c.posenc = PosencMode::rope;
  } else if (arm == "transformer-abmil") {
    c.encoder_layers = enc;
    c.posenc = PosencMode::none;
  } else if (arm == "vit-abmil") {
    c.encoder_layers = enc;
    c.posenc = PosencMode::abs;
  } else if (arm == "rope+abs-abmil") {
    c.encoder_layers = enc;
    c.posenc = PosencMode::rope_abs;
  } else if (arm == "abmil-2.1M") {
    c.width = 2 * b.d_model;
  } else if (arm == "abmil-4.2M") {
    c.width = 2 * b.d_model;
    c.hidden_layers = 2;
  } else {
    throw ConfigError("unknown model arm '" + arm + "'; valid arms: " + model_arms_joined());
  }
  return c;
}

template <typename T>
struct ModelParams {
  LinearParams<T> input;                 // F×w
  std::vector<LinearParams<T>> hidden;   // w×w, GELU before each
  std::vector<EncoderParams<T>> encoder;
  PoolHead pool = PoolHead::abmil;
  AbmilParams<T> abmil;
  DsmilParams<T> dsmil;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& c) : input(c.input_dim, c.width), pool(c.pool) {
    for (std::size_t i = 0; i < c.hidden_layers; ++i) hidden.emplace_back(c.width, c.width);
    for (std::size_t i = 0; i < c.encoder_layers; ++i)
      encoder.emplace_back(c.width, c.n_heads, c.ffn_mult);
    if (c.pool == PoolHead::abmil)
      abmil = AbmilParams<T>(c.width, c.pool_heads, c.n_classes);
    else
      dsmil = DsmilParams<T>(c.width, c.n_classes);
  }

  template <typename F>
  void visit(F&& f) {
    input.visit(f);
    for (auto& h : hidden) h.visit(f);
    for (auto& e : encoder) e.visit(f);
    if (pool == PoolHead::abmil)
      abmil.visit(f);
    else
      dsmil.visit(f);
  }
};

template <typename P>
auto tensors(P& params) {
  using M = std::remove_reference_t<decltype(params.input.weight)>;
  std::vector<M*> out;
  params.visit([&](M& m) { out.push_back(&m); });
  return out;
}

template <typename T>
std::size_t parameter_count(ModelParams<T>& params) {
  std::size_t n = 0;
  for (auto* m : tensors(params)) n += m->size();
  return n;
}

/// Parameter count of a configuration without allocating it.
inline std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t w = c.width, K = c.n_classes;
  std::size_t n = c.input_dim * w + w;
  n += c.hidden_layers * (w * w + w);
  n += c.encoder_layers * encoder_param_count(w, c.ffn_mult);
  if (c.pool == PoolHead::abmil)
    n += w + (w * w + w) + (w * K + K);
  else
    n += (w * K + K) + 2 * (w * w + w) + (K * w * K + K);
  return n;
}

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  ModelParams<T> z = p;
  for (auto* m : tensors(z)) m->fill(T(0));
  return z;
}

namespace detail {

template <typename T>
void init_uniform(Matrix<T>& m, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : m.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
void init_linear(LinearParams<T>& l, std::mt19937_64& rng) {
  init_uniform(l.weight, l.in_dim(), rng);
  if (l.has_bias()) init_uniform(l.bias, l.in_dim(), rng);
}

}  // namespace detail

/// Uniform ±1/√fan_in for every weight and bias; layer norms start at the
/// identity. Deterministic for a given seed.
template <typename T>
ModelParams<T> init_model(const ModelConfig& c, std::uint64_t seed) {
  ModelParams<T> p(c);
  std::mt19937_64 rng(seed);
  detail::init_linear(p.input, rng);
  for (auto& h : p.hidden) detail::init_linear(h, rng);
  for (auto& e : p.encoder) {
    detail::init_linear(e.mhsa.wq, rng);
    detail::init_linear(e.mhsa.wk, rng);
    detail::init_linear(e.mhsa.wv, rng);
    detail::init_linear(e.mhsa.wo, rng);
    detail::init_linear(e.ffn_in, rng);
    detail::init_linear(e.ffn_out, rng);
  }
  if (c.pool == PoolHead::abmil) {
    detail::init_uniform(p.abmil.class_token, c.width, rng);
    detail::init_linear(p.abmil.key, rng);
    detail::init_linear(p.abmil.classifier, rng);
  } else {
    detail::init_linear(p.dsmil.instance_classifier, rng);
    detail::init_linear(p.dsmil.query, rng);
    detail::init_linear(p.dsmil.value, rng);
    detail::init_linear(p.dsmil.bag_classifier, rng);
  }
  return p;
}

template <typename T>
struct ModelCache {
  Matrix<T> x0;                       // bag features, masked rows zeroed
  std::vector<Matrix<T>> hidden_in;   // pre-GELU input to each hidden layer
  std::vector<Matrix<T>> hidden_act;  // GELU output fed to each hidden layer
  Matrix<T> encoder_in;
  std::vector<EncoderCache<T>> encoder;
  AbmilCache<T> abmil;
  DsmilCache<T> dsmil;
  std::vector<bool> mask;
};

inline EncoderOptions encoder_options(const ModelConfig& c, bool training) {
  EncoderOptions o;
  o.posenc = c.posenc;
  o.attention.kernel = training ? AttentionKernel::naive : c.kernel;
  o.attention.rope_base = c.rope_base;
  o.attention.query_chunk = c.query_chunk;
  o.attention.key_chunk = c.key_chunk;
  return o;
}

/// Input projection → optional hidden MLP → optional encoder stack → pooling.
/// Passing a cache selects the differentiable (naive-kernel) path.
template <typename T>
PoolOutput<T> model_forward(const PatchBag& bag, const ModelConfig& c, const ModelParams<T>& p,
                            ModelCache<T>* cache = nullptr) {
  if (bag.feature_dim() != c.input_dim) {
    throw DimensionError("bag '" + bag.bag_id + "' has feature dim " +
                         std::to_string(bag.feature_dim()) + ", model expects " +
                         std::to_string(c.input_dim));
  }
  if (bag.mask.size() != bag.size() || bag.features.rows() != bag.size()) {
    throw DimensionError("bag '" + bag.bag_id + "' has inconsistent row counts");
  }
  const auto& mask = bag.mask;
  Matrix<T> x0 = zero_masked_rows(bag.features.template cast<T>(), mask);
  Matrix<T> x = zero_masked_rows(linear_forward(x0, p.input), mask);
  std::vector<Matrix<T>> hidden_in, hidden_act;
  for (const auto& layer : p.hidden) {
    Matrix<T> act = gelu(x);
    Matrix<T> next = zero_masked_rows(linear_forward(act, layer), mask);
    if (cache) {
      hidden_in.push_back(std::move(x));
      hidden_act.push_back(std::move(act));
    }
    x = std::move(next);
  }
  Matrix<T> enc_in = x;
  if (!p.encoder.empty()) {
    x = encoder_stack_forward(x, p.encoder, bag.coords, mask, encoder_options(c, cache != nullptr),
                              cache ? &cache->encoder : nullptr);
  }
  PoolOutput<T> out = c.pool == PoolHead::abmil
                          ? abmil_pool(x, p.abmil, mask, cache ? &cache->abmil : nullptr)
                          : dsmil_pool(x, p.dsmil, mask, cache ? &cache->dsmil : nullptr);
  if (cache) {
    cache->x0 = std::move(x0);
    cache->hidden_in = std::move(hidden_in);
    cache->hidden_act = std::move(hidden_act);
    cache->encoder_in = std::move(enc_in);
    cache->mask = mask;
  }
  return out;
}

/// Accumulates ∂loss/∂params into `g` given ∂loss/∂logits.
template <typename T>
void model_backward(const ModelCache<T>& c, const ModelConfig& cfg, const ModelParams<T>& p,
                    const Matrix<T>& dlogits, ModelParams<T>& g) {
  Matrix<T> d = cfg.pool == PoolHead::abmil ? abmil_backward(c.abmil, p.abmil, dlogits, g.abmil)
                                            : dsmil_backward(c.dsmil, p.dsmil, dlogits, g.dsmil);
  if (!p.encoder.empty()) d = encoder_stack_backward(c.encoder, p.encoder, d, g.encoder);
  for (std::size_t l = p.hidden.size(); l-- > 0;) {
    const Matrix<T> dact = linear_backward(c.hidden_act[l], p.hidden[l],
                                           zero_masked_rows(d, c.mask), g.hidden[l]);
    d = gelu_backward(c.hidden_in[l], dact);
  }
  linear_backward(c.x0, p.input, zero_masked_rows(d, c.mask), g.input);
}

/// Forward + cross-entropy + backward for one labelled bag. Returns the loss.
template <typename T>
T loss_and_grad(const PatchBag& bag, std::size_t label, const ModelConfig& c,
                const ModelParams<T>& p, ModelParams<T>& g, T weight = T(1)) {
  ModelCache<T> cache;
  const PoolOutput<T> out = model_forward(bag, c, p, &cache);
  LossResult<T> loss = cross_entropy_loss(out.logits, label);
  loss.dlogits *= weight;
  model_backward(cache, c, p, loss.dlogits, g);
  return loss.loss;
}

}  // namespace romil
