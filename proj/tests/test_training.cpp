// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "romil/metrics.hpp"
#include "romil/training.hpp"
#include "test_util.hpp"

using namespace romil;
using romil::testing::ap_pr_curve;
using romil::testing::auroc_pairs;
using romil::testing::random_coords;
using romil::testing::random_matrix;

namespace {

// Bags of `m` instances; feature 0 carries `signal` times ±1 by label.
Dataset toy_dataset(std::size_t n, std::size_t m, double signal, std::mt19937_64& rng,
                    bool shuffle_labels = false) {
  Dataset ds;
  ds.label_names = {"neg", "pos"};
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t y = b % 2;
    Matrix<float> f = random_matrix<float>(m, 4, rng);
    for (std::size_t i = 0; i < m; ++i) f(i, 0) = static_cast<float>(y ? signal : -signal);
    ds.bags.push_back(build_bag(std::move(f), random_coords(m, 10, rng), "bag" + std::to_string(b), y));
    ds.labels.push_back(y);
  }
  if (shuffle_labels) std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
  return ds;
}

ModelConfig toy_model() {
  ModelBase b;
  b.input_dim = 4;
  b.d_model = 8;
  b.n_heads = 2;
  b.pool_heads = 1;
  b.ffn_mult = 2;
  return arm_config("abmil", b);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsAndMoments) {
  Matrix<double> p = Matrix<double>::from_rows({{1.5, -2.0}});
  Matrix<double> g(1, 2);
  AdamState<double> st;
  adam_step<double>({&p}, {&g}, st, AdamConfig{});
  EXPECT_EQ(p(0, 0), 1.5);
  EXPECT_EQ(p(0, 1), -2.0);
  EXPECT_EQ(st.m[0](0, 0), 0.0);
  EXPECT_EQ(st.v[0](0, 1), 0.0);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, SingleStepClosedForm) {
  // After one step m̂ = g and v̂ = g², so the update is lr·g/(|g|+ε).
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  Matrix<double> p = Matrix<double>::from_rows({{0.0, 1.0, -1.0}});
  const Matrix<double> g = Matrix<double>::from_rows({{0.3, -2.0, 1e-9}});
  AdamState<double> st;
  adam_step<double>({&p}, {const_cast<Matrix<double>*>(&g)}, st, cfg);
  const double expect[] = {-1e-2 * 0.3 / (0.3 + 1e-8), 1.0 + 1e-2 * 2.0 / (2.0 + 1e-8),
                           -1.0 - 1e-2 * 1e-9 / (1e-9 + 1e-8)};
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(p(0, j), expect[j], 1e-15);
}

TEST(Adam, TwoStepsMatchScalarReference) {
  AdamConfig cfg;
  cfg.learning_rate = 3e-3;
  std::mt19937_64 rng(1);
  Matrix<double> p = random_matrix(3, 4, rng), g1 = random_matrix(3, 4, rng), g2 = random_matrix(3, 4, rng);
  const Matrix<double> p0 = p;
  AdamState<double> st;
  adam_step<double>({&p}, {&g1}, st, cfg);
  adam_step<double>({&p}, {&g2}, st, cfg);
  for (std::size_t j = 0; j < p.size(); ++j) {
    double x = p0.data()[j], m = 0, v = 0;
    const double gs[] = {g1.data()[j], g2.data()[j]};
    for (int t = 1; t <= 2; ++t) {
      m = 0.9 * m + 0.1 * gs[t - 1];
      v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      x -= 3e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
    EXPECT_NEAR(p.data()[j], x, 1e-12);
  }
}

TEST(Adam, NonFiniteGradientAbortsBeforeAnyUpdate) {
  Matrix<double> a = Matrix<double>::from_rows({{1.0}}), b = Matrix<double>::from_rows({{2.0}});
  Matrix<double> ga = Matrix<double>::from_rows({{0.5}}), gb(1, 1);
  gb(0, 0) = NAN;
  AdamState<double> st;
  EXPECT_THROW(adam_step<double>({&a, &b}, {&ga, &gb}, st, AdamConfig{}), NumericError);
  EXPECT_EQ(a(0, 0), 1.0);
  EXPECT_EQ(st.t, 0u);
}

TEST(Kfold, BalancedSmallCase) {
  const std::vector<std::size_t> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto folds = stratified_kfold(y, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> hits(10, 0);
  for (const auto& f : folds) {
    ASSERT_EQ(f.size(), 2u);
    EXPECT_NE(y[f[0]], y[f[1]]);
    for (auto i : f) ++hits[i];
  }
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_EQ(stratified_kfold(y, 5, 3), folds);
  EXPECT_NE(stratified_kfold(y, 5, 4), folds);
}

TEST(Kfold, SixtyFortyGivesSixFourPerFold) {
  std::vector<std::size_t> y(100, 0);
  for (std::size_t i = 0; i < 40; ++i) y[i * 2 + 1] = 1;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto folds = stratified_kfold(y, 10, seed);
    std::vector<int> hits(100, 0);
    for (const auto& f : folds) {
      std::size_t ones = 0;
      for (auto i : f) {
        ones += y[i];
        ++hits[i];
      }
      EXPECT_EQ(f.size(), 10u);
      EXPECT_EQ(ones, 4u);
    }
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Kfold, ClassSmallerThanKIsConfigError) {
  EXPECT_THROW(stratified_kfold({0, 0, 0, 1, 1}, 3, 0), ConfigError);
  EXPECT_THROW(stratified_kfold({0, 1}, 1, 0), ConfigError);
}

TEST(Holdout, StratifiedAndDisjoint) {
  std::vector<std::size_t> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = i < 30 ? 0 : 1;
  std::vector<std::size_t> pool(50);
  std::iota(pool.begin(), pool.end(), 0);
  const auto [kept, held] = stratified_holdout(pool, y, 0.1, 9);
  EXPECT_EQ(held.size(), 5u);
  std::size_t ones = 0;
  for (auto i : held) ones += y[i];
  EXPECT_EQ(ones, 2u);
  EXPECT_EQ(kept.size() + held.size(), 50u);
  for (auto i : held) EXPECT_FALSE(std::binary_search(kept.begin(), kept.end(), i));
}

TEST(Metrics, Examples) {
  EXPECT_DOUBLE_EQ(auroc_binary({false, false, true, true}, {0.1, 0.4, 0.35, 0.8}), 0.75);
  EXPECT_DOUBLE_EQ(auroc_binary({false, true, false, true}, {0.1, 0.9, 0.2, 0.8}), 1.0);
  EXPECT_DOUBLE_EQ(auroc_binary({false, true, false, true}, {0.3, 0.3, 0.3, 0.3}), 0.5);
  EXPECT_NEAR(average_precision({true, false, true, false}, {0.9, 0.8, 0.7, 0.6}), 5.0 / 6.0, 1e-12);
  EXPECT_DOUBLE_EQ(average_precision({true, true, false}, {0.9, 0.8, 0.1}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({false, false, false, false, true}, {5, 4, 3, 2, 1}), 0.2);

  const std::vector<std::size_t> y{0, 0, 1, 1};
  const auto s = Matrix<double>::from_rows({{0.9, 0.1}, {0.6, 0.4}, {0.65, 0.35}, {0.2, 0.8}});
  EXPECT_DOUBLE_EQ(auroc_macro(y, s), 0.75);
  EXPECT_THROW(auroc_macro({1, 1}, Matrix<double>(2, 2)), ArgumentError);
  EXPECT_THROW(average_precision({false, false}, {1, 2}), ArgumentError);
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 15;
    std::vector<bool> pos(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = rng() % 2;
      s[i] = static_cast<double>(rng() % 6) / 5.0;  // coarse grid forces ties
    }
    pos[0] = true;
    pos[1] = false;
    EXPECT_NEAR(auroc_binary(pos, s), auroc_pairs(pos, s), 1e-12);
    EXPECT_NEAR(average_precision(pos, s), ap_pr_curve(pos, s), 1e-12);
  }
}

TEST(Metrics, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<bool> pos(12);
    std::vector<double> s(12), t(12);
    for (std::size_t i = 0; i < 12; ++i) {
      pos[i] = i % 3 == 0;
      s[i] = std::round(nd(rng) * 2) / 2;
      t[i] = std::exp(3 * s[i]) + 7;
    }
    EXPECT_NEAR(auroc_binary(pos, s), auroc_binary(pos, t), 1e-12);
    EXPECT_NEAR(average_precision(pos, s), average_precision(pos, t), 1e-12);
  }
}

TEST(EarlyStopping, PatienceOneOnConstantLossStopsAtEpochTwo) {
  EarlyStopper s(1);
  EXPECT_FALSE(s.update(0.7));
  EXPECT_TRUE(s.update(0.7));
  EXPECT_EQ(s.best_epoch(), 1u);
  EarlyStopper t(3);
  EXPECT_FALSE(t.update(1.0));
  EXPECT_FALSE(t.update(0.9));
  EXPECT_FALSE(t.update(0.95));
  EXPECT_FALSE(t.update(0.9));
  EXPECT_TRUE(t.update(0.91));
  EXPECT_EQ(t.best_epoch(), 2u);
}

TEST(Training, AccumulatedGradientIsMeanLossGradient) {
  std::mt19937_64 rng(4);
  const Dataset ds = toy_dataset(4, 5, 1.0, rng);
  const ModelConfig mc = toy_model();
  const auto p = init_model<double>(mc, 1);
  ModelParams<double> acc = zeros_like(p);
  for (std::size_t i = 0; i < 4; ++i) loss_and_grad(ds.bags[i], ds.labels[i], mc, p, acc, 0.25);
  ModelParams<double> sum = zeros_like(p);
  for (std::size_t i = 0; i < 4; ++i) {
    ModelParams<double> one = zeros_like(p);
    loss_and_grad(ds.bags[i], ds.labels[i], mc, p, one);
    const auto a = tensors(one), b = tensors(sum);
    for (std::size_t t = 0; t < a.size(); ++t) *b[t] += *a[t];
  }
  const auto a = tensors(acc), b = tensors(sum);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t j = 0; j < a[t]->size(); ++j) EXPECT_NEAR(a[t]->data()[j], 0.25 * b[t]->data()[j], 1e-10);
}

TEST(Training, SeparableDatasetReachesPerfectAuroc) {
  std::mt19937_64 rng(5);
  const Dataset ds = toy_dataset(200, 6, 2.0, rng);
  TrainConfig tc;
  tc.adam.learning_rate = 1e-3;
  tc.max_epochs = 2;
  tc.folds = 5;
  tc.seed = 1;
  const auto run = train<float>(ds, toy_model(), tc);
  for (const auto& f : run.folds) EXPECT_EQ(f.test_auroc, 1.0) << "fold " << f.fold;
  EXPECT_EQ(run.auroc.mean, 1.0);
}

TEST(Training, ShuffledLabelsStayNearChance) {
  std::mt19937_64 rng(6);
  const Dataset ds = toy_dataset(100, 6, 0.0, rng, true);
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.folds = 10;
  tc.seed = 2;
  const auto run = train<float>(ds, toy_model(), tc);
  EXPECT_GE(run.auroc.mean, 0.35);
  EXPECT_LE(run.auroc.mean, 0.65);
}

TEST(Training, BitDeterministicAndThreadCountIndependent) {
  std::mt19937_64 rng(7);
  const Dataset ds = toy_dataset(30, 5, 0.5, rng);
  TrainConfig tc;
  tc.adam.learning_rate = 1e-3;
  tc.max_epochs = 3;
  tc.folds = 3;
  tc.seed = 11;
  const auto a = train<float>(ds, toy_model(), tc);
  const auto b = train<float>(ds, toy_model(), tc);
  tc.fold_threads = 3;
  const auto c = train<float>(ds, toy_model(), tc);
  for (std::size_t f = 0; f < 3; ++f) {
    auto pa = a.folds[f].best_params, pb = b.folds[f].best_params, pc = c.folds[f].best_params;
    const auto ta = tensors(pa), tb = tensors(pb), tcs = tensors(pc);
    for (std::size_t t = 0; t < ta.size(); ++t) {
      EXPECT_EQ(ta[t]->values(), tb[t]->values());
      EXPECT_EQ(ta[t]->values(), tcs[t]->values());
    }
    EXPECT_EQ(a.folds[f].test_auroc, b.folds[f].test_auroc);
    EXPECT_EQ(a.folds[f].epochs.back().val_loss, c.folds[f].epochs.back().val_loss);
  }
}

TEST(Training, ConfigValidation) {
  std::mt19937_64 rng(8);
  const Dataset ds = toy_dataset(10, 3, 1.0, rng);
  TrainConfig tc;
  tc.folds = 1;
  EXPECT_THROW(train<float>(ds, toy_model(), tc), ConfigError);
  tc.folds = 6;
  EXPECT_THROW(train<float>(ds, toy_model(), tc), ConfigError);
  tc.folds = 2;
  tc.val_fraction = 1.0;
  EXPECT_THROW(train<float>(ds, toy_model(), tc), ConfigError);
}

TEST(FoldSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::size_t f = 0; f < 10; ++f)
      for (std::uint64_t salt = 0; salt < 5; ++salt) seen.insert(fold_seed(s, f, salt));
  EXPECT_EQ(seen.size(), 200u);
}
