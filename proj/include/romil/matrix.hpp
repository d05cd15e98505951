// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "romil/error.hpp"

namespace romil {

/// Dense row-major matrix. This is the storage type for bag features, weights
/// and every intermediate activation.
///
/// Element access is unchecked. The checked factories (`from_data`,
/// `from_rows`) reject non-finite entries; the plain shape constructor
/// zero-fills.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<T> data) {
    if (data.size() != rows * cols) {
      std::ostringstream os;
      os << "matrix data length " << data.size() << " does not match shape " << rows << "x"
         << cols;
      throw DimensionError(os.str());
    }
    for (const T& v : data) {
      if (!std::isfinite(v)) throw NumericError("matrix constructed with a non-finite entry");
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged initializer for matrix");
      data.insert(data.end(), row.begin(), row.end());
    }
    return from_data(r, c, std::move(data));
  }

  static Matrix row_vector(std::span<const T> values) {
    return from_data(1, values.size(), std::vector<T>(values.begin(), values.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Matrix& o) const = default;

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(*this, o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Matrix& operator*=(T s) {
    for (T& v : data_) v *= s;
    return *this;
  }

  static void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
      throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                           b.shape_str());
    }
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Reverse-mode slot: a value and its accumulated gradient of equal shape.
template <typename T>
struct GradPair {
  Matrix<T> value;
  Matrix<T> grad;

  explicit GradPair(Matrix<T> v) : value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad.fill(T(0)); }
};

namespace detail {

// out(i, :) += a(i, k) * b(k, :) for k ascending. Every output element is
// accumulated in increasing k, which is what makes all product variants below
// agree bit-for-bit with a textbook triple loop.
template <typename T>
void gemm_accumulate(const T* a, std::size_t a_row_stride, std::size_t a_col_stride,
                     const T* b, std::size_t n, std::size_t inner, std::size_t m, T* out) {
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = out + i * m;
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = a[i * a_row_stride + k * a_col_stride];
      const T* brow = b + k * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
}

}  // namespace detail

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// a × b.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + a.shape_str() + " x " +
                         b.shape_str() + ")");
  }
  Matrix<T> out(a.rows(), b.cols());
  detail::gemm_accumulate(a.data(), a.cols(), 1, b.data(), a.rows(), a.cols(), b.cols(),
                          out.data());
  return out;
}

/// aᵀ × b without materializing the transpose.
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: inner dimensions differ (" + a.shape_str() + "^T x " +
                         b.shape_str() + ")");
  }
  Matrix<T> out(a.cols(), b.cols());
  detail::gemm_accumulate(a.data(), 1, a.cols(), b.data(), a.cols(), a.rows(), b.cols(),
                          out.data());
  return out;
}

/// a × bᵀ.
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ (" + a.shape_str() + " x " +
                         b.shape_str() + "^T)");
  }
  return matmul(a, transpose(b));
}

/// Accumulating variant used by backward passes: out += aᵀ × b.
template <typename T>
void matmul_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw DimensionError("matmul_tn_acc: incompatible shapes " + a.shape_str() + "^T x " +
                         b.shape_str() + " -> " + out.shape_str());
  }
  Matrix<T> tmp = matmul_tn(a, b);
  out += tmp;
}

template <typename T>
void add_row_broadcast(Matrix<T>& x, const Matrix<T>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("bias shape " + bias.shape_str() + " does not broadcast over " +
                         x.shape_str());
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) r[j] += bias(0, j);
  }
}

template <typename T>
void add_colsum(const Matrix<T>& x, Matrix<T>& out) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += r[j];
  }
}

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T>::require_same_shape(a, b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

template <typename T>
bool all_finite(const Matrix<T>& a) {
  for (const T& v : a.values())
    if (!std::isfinite(v)) return false;
  return true;
}

/// Columns [c0, c0 + width) as a new matrix.
template <typename T>
Matrix<T> slice_cols(const Matrix<T>& a, std::size_t c0, std::size_t width) {
  Matrix<T> out(a.rows(), width);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = a(i, c0 + j);
  return out;
}

template <typename T>
void add_into_cols(Matrix<T>& dst, std::size_t c0, const Matrix<T>& src) {
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, c0 + j) += src(i, j);
}

}  // namespace romil
