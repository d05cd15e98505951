// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "romil/matrix.hpp"
#include "romil/ops.hpp"
#include "test_util.hpp"

using namespace romil;
using romil::testing::grad_check;
using romil::testing::random_matrix;

namespace {

Matrix<double> triple_loop(const Matrix<double>& a, const Matrix<double>& b) {
  Matrix<double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

}  // namespace

TEST(Matmul, IdentityAndProjector) {
  const auto eye = Matrix<double>::from_rows({{1, 0}, {0, 1}});
  const auto m = Matrix<double>::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(eye, m), m);
  const auto proj = Matrix<double>::from_rows({{1, 0}, {0, 0}});
  const auto b = Matrix<double>::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(proj, b), Matrix<double>::from_rows({{5, 6}, {0, 0}}));
}

TEST(Matmul, MatchesTripleLoopExactly) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_matrix(3, 4, rng);
    const auto b = random_matrix(4, 2, rng);
    EXPECT_EQ(matmul(a, b), triple_loop(a, b));
    EXPECT_EQ(matmul_tn(transpose(a), b), triple_loop(a, b));
    EXPECT_EQ(matmul_nt(a, transpose(b)), triple_loop(a, b));
  }
}

TEST(Matmul, BitReproducible) {
  std::mt19937_64 rng(5);
  const auto a = random_matrix(37, 53, rng);
  const auto b = random_matrix(53, 29, rng);
  const auto first = matmul(a, b);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(matmul(a, b), first);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Matrix<double>(2, 3), Matrix<double>(2, 3));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3 x 2x3"), std::string::npos) << msg;
  }
}

TEST(Matrix, RejectsNonFiniteOnConstruction) {
  EXPECT_THROW(Matrix<double>::from_rows({{1.0, NAN}}), NumericError);
  EXPECT_THROW(Matrix<double>::from_data(2, 2, {1, 2, 3}), DimensionError);
}

TEST(MaskedSoftmax, Examples) {
  const std::vector<bool> all{true, true, true};
  auto r = masked_row_softmax(Matrix<double>::from_rows({{0, 0, 0}}), all);
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(r.probs(0, j), 1.0 / 3.0);

  r = masked_row_softmax(Matrix<double>::from_rows({{10, 0, 0}}), {true, false, false});
  EXPECT_EQ(r.probs(0, 0), 1.0);
  EXPECT_EQ(r.probs(0, 1), 0.0);
  EXPECT_EQ(r.probs(0, 2), 0.0);

  // High-precision exp-normalize of [1, 2, 3].
  r = masked_row_softmax(Matrix<double>::from_rows({{1, 2, 3}}), all);
  EXPECT_NEAR(r.probs(0, 0), 0.09003057, 1e-8);
  EXPECT_NEAR(r.probs(0, 1), 0.24472847, 1e-8);
  EXPECT_NEAR(r.probs(0, 2), 0.66524096, 1e-8);
}

TEST(MaskedSoftmax, AllMaskedRowIsDegenerate) {
  auto r = masked_row_softmax(Matrix<double>::from_rows({{1, 2}, {3, 4}}), {false, false});
  EXPECT_EQ(r.degenerate_rows, (std::vector<std::size_t>{0, 1}));
  for (double v : r.probs.values()) EXPECT_EQ(v, 0.0);
}

TEST(MaskedSoftmax, MaskedColumnsNeverRead) {
  Matrix<double> s = Matrix<double>::from_rows({{1, 0, 2}});
  s(0, 1) = NAN;
  auto r = masked_row_softmax(s, {true, false, true});
  EXPECT_TRUE(all_finite(r.probs));
  EXPECT_EQ(r.probs(0, 1), 0.0);
}

TEST(MaskedSoftmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    auto s = random_matrix(4, n, rng, 5.0);
    auto mask = romil::testing::random_mask(n, 0.5, rng);
    auto p = masked_row_softmax(s, mask).probs;
    Matrix<double> shifted = s;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      const double c = (i + 1) * 17.25;
      for (std::size_t j = 0; j < n; ++j) shifted(i, j) += c;
    }
    auto q = masked_row_softmax(shifted, mask).probs;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        sum += p(i, j);
        if (!mask[j]) {
          EXPECT_EQ(p(i, j), 0.0);
        }
        EXPECT_NEAR(p(i, j), q(i, j), 1e-12);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(MaskedSoftmax, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  auto s = random_matrix(3, 6, rng);
  const std::vector<bool> mask{true, false, true, true, false, true};
  const auto w = random_matrix(3, 6, rng);
  auto loss = [&] {
    auto p = masked_row_softmax(s, mask).probs;
    double l = 0;
    for (std::size_t i = 0; i < p.size(); ++i) l += p.data()[i] * w.data()[i];
    return l;
  };
  const auto p = masked_row_softmax(s, mask).probs;
  Matrix<double> ds = softmax_backward(p, w);
  auto r = grad_check({&s}, {&ds}, loss);
  EXPECT_LE(r.max_rel_err, 1e-6);
}

TEST(LayerNorm, Examples) {
  const auto g = Matrix<double>(1, 3, 1.0), b = Matrix<double>(1, 3, 0.0);
  auto y = layer_norm(Matrix<double>::from_rows({{5, 5, 5}}), g, b, 1e-5);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);

  y = layer_norm(Matrix<double>::from_rows({{1, -1}}), Matrix<double>(1, 2, 1.0),
                 Matrix<double>(1, 2, 0.0), 1e-15);
  EXPECT_NEAR(y(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(y(0, 1), -1.0, 1e-12);

  // Formula evaluated at 30 digits: ±sqrt(1.5)/sqrt(1 + 1.5e-5).
  y = layer_norm(Matrix<double>::from_rows({{1, 2, 3}}), g, b, 1e-5);
  EXPECT_NEAR(y(0, 0), -1.22473568590839017, 1e-14);
  EXPECT_NEAR(y(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(y(0, 2), 1.22473568590839017, 1e-14);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto x = random_matrix(4, 5, rng);
  LayerNormParams<double> p{random_matrix(1, 5, rng), random_matrix(1, 5, rng)};
  const auto w = random_matrix(4, 5, rng);
  auto loss = [&] {
    auto y = layer_norm(x, p.gamma, p.beta, 1e-5);
    double l = 0;
    for (std::size_t i = 0; i < y.size(); ++i) l += y.data()[i] * w.data()[i];
    return l;
  };
  LayerNormCache<double> cache;
  layer_norm(x, p.gamma, p.beta, 1e-5, &cache);
  LayerNormParams<double> g{Matrix<double>(1, 5), Matrix<double>(1, 5)};
  Matrix<double> dx = layer_norm_backward(cache, p.gamma, w, g);
  auto r = grad_check({&x, &p.gamma, &p.beta}, {&dx, &g.gamma, &g.beta}, loss);
  EXPECT_LE(r.max_rel_err, 1e-6);
}

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(cross_entropy_loss(Matrix<double>::from_rows({{0, 0}}), 0).loss, std::log(2.0), 1e-12);
  const auto sat = cross_entropy_loss(Matrix<double>::from_rows({{100, 0}}), 0);
  EXPECT_TRUE(std::isfinite(sat.loss));
  EXPECT_NEAR(sat.loss, 0.0, 1e-40);
  EXPECT_NEAR(cross_entropy_loss(Matrix<double>::from_rows({{1, 2, 3}}), 1).loss, 1.40760596, 1e-6);
  EXPECT_THROW(cross_entropy_loss(Matrix<double>::from_rows({{1, 2}}), 2), ArgumentError);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
  std::mt19937_64 rng(4);
  auto logits = random_matrix(1, 4, rng, 3.0);
  auto res = cross_entropy_loss(logits, 2);
  auto r = grad_check({&logits}, {&res.dlogits}, [&] { return cross_entropy_loss(logits, 2).loss; });
  EXPECT_LE(r.max_rel_err, 1e-6);
}

TEST(Gelu, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  auto x = random_matrix(3, 7, rng, 2.0);
  const auto w = random_matrix(3, 7, rng);
  auto loss = [&] {
    auto y = gelu(x);
    double l = 0;
    for (std::size_t i = 0; i < y.size(); ++i) l += y.data()[i] * w.data()[i];
    return l;
  };
  Matrix<double> dx = gelu_backward(x, w);
  EXPECT_LE(grad_check({&x}, {&dx}, loss).max_rel_err, 1e-6);
}

TEST(Linear, GradientMatchesFiniteDifferences32And64) {
  std::mt19937_64 rng(10);
  auto x = random_matrix(5, 3, rng);
  LinearParams<double> p(3, 4);
  p.weight = random_matrix(3, 4, rng);
  p.bias = random_matrix(1, 4, rng);
  const auto w = random_matrix(5, 4, rng);
  auto loss = [&] {
    auto y = linear_forward(x, p);
    double l = 0;
    for (std::size_t i = 0; i < y.size(); ++i) l += y.data()[i] * w.data()[i];
    return l;
  };
  LinearParams<double> g(3, 4);
  Matrix<double> dx = linear_backward(x, p, w, g);
  EXPECT_LE(grad_check({&x, &p.weight, &p.bias}, {&dx, &g.weight, &g.bias}, loss).max_rel_err, 1e-6);

  // 32-bit: same composition, looser bound with a larger step.
  auto xf = x.cast<float>();
  LinearParams<float> pf(3, 4);
  pf.weight = p.weight.cast<float>();
  pf.bias = p.bias.cast<float>();
  const auto wf = w.cast<float>();
  LinearParams<float> gf(3, 4);
  const Matrix<float> dxf = linear_backward(xf, pf, wf, gf);
  double worst = 0;
  const float h = 1e-2f;
  for (std::size_t i = 0; i < pf.weight.size(); ++i) {
    float& v = pf.weight.data()[i];
    const float saved = v;
    auto lossf = [&] {
      auto y = linear_forward(xf, pf);
      double l = 0;
      for (std::size_t k = 0; k < y.size(); ++k) l += double(y.data()[k]) * double(wf.data()[k]);
      return l;
    };
    v = saved + h;
    const double up = lossf();
    v = saved - h;
    const double down = lossf();
    v = saved;
    worst = std::max(worst, romil::testing::rel_err(gf.weight.data()[i], (up - down) / (2 * h)));
  }
  EXPECT_LE(worst, 1e-3);
  (void)dxf;
}
