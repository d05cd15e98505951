// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "romil/error.hpp"
#include "romil/grid.hpp"
#include "romil/matrix.hpp"

namespace romil {

/// Rotation frequencies θ_i = base^(−2i/d) for a feature width d, plus the
/// half-width table used when d is split across the two grid axes.
///
/// cos/sin factors for coordinates in [0, cache_extent) are precomputed;
/// other coordinates (negative, or past the extent) are evaluated on the fly
/// with the same expression, so cached and uncached paths agree bit for bit.
template <typename T>
class RopeTable {
 public:
  explicit RopeTable(std::size_t dim, double base = 10000.0, std::int64_t cache_extent = 0)
      : dim_(dim), base_(base) {
    if (dim == 0 || dim % 2 != 0) {
      throw ConfigError("RoPE dimension must be even and positive, got " + std::to_string(dim));
    }
    if (!(base > 0.0)) throw ConfigError("RoPE base must be positive");
    freqs_ = make_freqs(dim);
    if (dim % 4 == 0) axis_freqs_ = make_freqs(dim / 2);
    if (cache_extent > 0 && !axis_freqs_.empty()) {
      extent_ = cache_extent;
      const std::size_t nf = axis_freqs_.size();
      cos_.resize(static_cast<std::size_t>(extent_) * nf);
      sin_.resize(cos_.size());
      for (std::int64_t m = 0; m < extent_; ++m)
        for (std::size_t i = 0; i < nf; ++i) {
          const T angle = static_cast<T>(m) * axis_freqs_[i];
          cos_[m * nf + i] = std::cos(angle);
          sin_[m * nf + i] = std::sin(angle);
        }
    }
  }

  std::size_t dim() const { return dim_; }
  double base() const { return base_; }
  bool supports_2d() const { return !axis_freqs_.empty(); }
  const std::vector<T>& freqs() const { return freqs_; }
  const std::vector<T>& axis_freqs() const { return axis_freqs_; }

  /// Rotates consecutive pairs of `h` by m·θ_i (or −m·θ_i when `inverse`).
  void rotate_1d(std::span<T> h, std::int64_t m, bool inverse = false) const {
    if (h.size() != dim_) {
      throw DimensionError("rope_1d: vector length " + std::to_string(h.size()) +
                           " does not match table dim " + std::to_string(dim_));
    }
    rotate_pairs(h, m, freqs_, false, inverse);
  }

  /// Axis-half rotation used by the 2D form: `h` has length dim/2.
  void rotate_axis(std::span<T> h, std::int64_t m, bool inverse = false) const {
    rotate_pairs(h, m, axis_freqs_, true, inverse);
  }

 private:
  std::vector<T> make_freqs(std::size_t d) const {
    std::vector<T> f(d / 2);
    for (std::size_t i = 0; i < f.size(); ++i)
      f[i] = static_cast<T>(std::pow(base_, -2.0 * static_cast<double>(i) / static_cast<double>(d)));
    return f;
  }

  void rotate_pairs(std::span<T> h, std::int64_t m, const std::vector<T>& freqs, bool cacheable,
                    bool inverse) const {
    const bool cached = cacheable && m >= 0 && m < extent_;
    const std::size_t nf = freqs.size();
    for (std::size_t i = 0; i < nf; ++i) {
      T c, s;
      if (cached) {
        c = cos_[m * nf + i];
        s = sin_[m * nf + i];
      } else {
        const T angle = static_cast<T>(m) * freqs[i];
        c = std::cos(angle);
        s = std::sin(angle);
      }
      if (inverse) s = -s;
      const T a = h[2 * i], b = h[2 * i + 1];
      h[2 * i] = a * c - b * s;
      h[2 * i + 1] = b * c + a * s;
    }
  }

  std::size_t dim_;
  double base_;
  std::vector<T> freqs_;
  std::vector<T> axis_freqs_;
  std::int64_t extent_ = 0;
  std::vector<T> cos_, sin_;
};

/// 1D rotary encoding of a single vector at integer position m.
template <typename T>
std::vector<T> rope_1d(std::span<const T> h, std::int64_t m, const RopeTable<T>& table) {
  std::vector<T> out(h.begin(), h.end());
  table.rotate_1d(out, m);
  return out;
}

/// 2D rotary encoding: the first d/2 features are rotated by x, the last d/2
/// by y, each with the frequency table of width d/2.
template <typename T>
void rope_2d_inplace(Matrix<T>& h, const std::vector<GridCoord>& coords, const RopeTable<T>& table,
                     bool inverse = false) {
  if (!table.supports_2d()) {
    throw ConfigError("2D RoPE needs a dimension divisible by 4, got " +
                      std::to_string(table.dim()));
  }
  if (h.cols() != table.dim()) {
    throw DimensionError("rope_2d: feature width " + std::to_string(h.cols()) +
                         " does not match table dim " + std::to_string(table.dim()));
  }
  if (coords.size() != h.rows()) {
    throw DimensionError("rope_2d: " + std::to_string(coords.size()) + " coordinates for " +
                         std::to_string(h.rows()) + " rows");
  }
  const std::size_t half = table.dim() / 2;
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto r = h.row(i);
    table.rotate_axis(r.subspan(0, half), coords[i].x, inverse);
    table.rotate_axis(r.subspan(half, half), coords[i].y, inverse);
  }
}

template <typename T>
Matrix<T> rope_2d(const Matrix<T>& h, const std::vector<GridCoord>& coords,
                  const RopeTable<T>& table) {
  Matrix<T> out = h;
  rope_2d_inplace(out, coords, table);
  return out;
}

/// Absolute 2D sin-cos table: the first d/2 columns encode x as interleaved
/// (sin, cos) pairs at θ_i = 10000^(−2i/(d/2)), the last d/2 encode y.
template <typename T>
Matrix<T> sincos_abs_2d(const std::vector<GridCoord>& coords, std::size_t d) {
  if (d == 0 || d % 4 != 0) {
    throw ConfigError("absolute 2D encoding needs a dimension divisible by 4, got " +
                      std::to_string(d));
  }
  const std::size_t half = d / 2;
  const std::size_t nf = half / 2;
  std::vector<T> freqs(nf);
  for (std::size_t i = 0; i < nf; ++i)
    freqs[i] = static_cast<T>(std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half)));
  Matrix<T> out(coords.size(), d);
  for (std::size_t r = 0; r < coords.size(); ++r) {
    const T axis[2] = {static_cast<T>(coords[r].x), static_cast<T>(coords[r].y)};
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t i = 0; i < nf; ++i) {
        const T angle = axis[a] * freqs[i];
        out(r, a * half + 2 * i) = std::sin(angle);
        out(r, a * half + 2 * i + 1) = std::cos(angle);
      }
  }
  return out;
}

}  // namespace romil
