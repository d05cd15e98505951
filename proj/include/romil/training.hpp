// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "romil/dataset.hpp"
#include "romil/error.hpp"
#include "romil/matrix.hpp"
#include "romil/metrics.hpp"
#include "romil/model.hpp"
#include "romil/ops.hpp"

namespace romil {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Matrix<T>> m, v;
  std::size_t t = 0;
};

/// Bias-corrected Adam. Any non-finite gradient aborts the step before a
/// single parameter is touched.
template <typename T>
void adam_step(const std::vector<Matrix<T>*>& params, const std::vector<Matrix<T>*>& grads,
               AdamState<T>& st, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionError("adam: params/grads count differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix<T>::require_same_shape(*params[i], *grads[i], "adam");
    if (!all_finite(*grads[i])) {
      throw NumericError("adam: non-finite gradient in tensor " + std::to_string(i) + " (" +
                         grads[i]->shape_str() + ") at step " + std::to_string(st.t + 1));
    }
  }
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.emplace_back(p->rows(), p->cols());
      st.v.emplace_back(p->rows(), p->cols());
    }
  }
  ++st.t;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  const T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(st.t)));
  const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(st.t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->data();
    const T* g = grads[i]->data();
    T* m = st.m[i].data();
    T* v = st.v[i].data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] / c1, vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// k disjoint test folds. Each class is shuffled and dealt round-robin, with
/// the dealing position carried across classes so fold sizes stay balanced.
inline std::vector<std::vector<std::size_t>> stratified_kfold(const std::vector<std::size_t>& labels,
                                                              std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [cls, idx] : by_class) {
    if (idx.size() < k) {
      throw ConfigError("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                        " members, fewer than k=" + std::to_string(k));
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& [cls, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i : idx) {
      folds[next].push_back(i);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Stratified holdout of `fraction` of `pool` (at least one per class, never
/// the whole class). Returns {kept, held_out}.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<std::size_t>& pool, const std::vector<std::size_t>& labels, double fraction,
    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("val_fraction must be in (0, 1)");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i : pool) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> kept, held;
  for (auto& [cls, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    n_held = std::clamp<std::size_t>(n_held, 1, idx.size() > 1 ? idx.size() - 1 : 0);
    held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
    kept.insert(kept.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
  }
  std::sort(kept.begin(), kept.end());
  std::sort(held.begin(), held.end());
  return {kept, held};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  AdamConfig adam;
  std::size_t effective_batch = 4;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double val_fraction = 0.1;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  std::size_t fold_threads = 1;

  void validate() const {
    if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (effective_batch == 0) throw ConfigError("effective_batch must be >= 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0, 1)");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (fold_threads == 0) throw ConfigError("fold_threads must be >= 1");
  }
};

/// Stop once the monitored loss has failed to strictly improve for
/// `patience` consecutive epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Records one epoch; returns true when training should stop.
  bool update(double loss) {
    ++epoch_;
    if (loss < best_) {
      best_ = loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

  bool improved_last() const { return best_epoch_ == epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auroc = std::numeric_limits<double>::quiet_NaN();
};

template <typename T>
struct FoldResult {
  std::size_t fold = 0;
  std::vector<EpochRecord> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  double test_auroc = 0.0;
  double test_ap = 0.0;
  ModelParams<T> best_params;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample standard deviation (n−1); zero for a single value.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

template <typename T>
struct TrainRun {
  std::vector<FoldResult<T>> folds;
  MeanStd auroc, ap;
};

struct Evaluation {
  Matrix<double> probs;  // n×K
  std::vector<std::size_t> labels;
  double loss = 0.0;
  double auroc = std::numeric_limits<double>::quiet_NaN();
  double ap = std::numeric_limits<double>::quiet_NaN();
};

/// Forward-only pass over `indices`: mean loss, class probabilities and, when
/// at least two classes are present, macro AUROC/AP.
template <typename T>
Evaluation evaluate(const Dataset& ds, const std::vector<std::size_t>& indices,
                    const ModelConfig& mc, const ModelParams<T>& p) {
  Evaluation ev;
  ev.probs = Matrix<double>(indices.size(), mc.n_classes);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    const PoolOutput<T> out = model_forward(ds.bags[i], mc, p);
    const T loss = cross_entropy_loss(out.logits, ds.labels[i]).loss;
    if (!std::isfinite(loss)) throw NumericError("non-finite loss on bag '" + ds.bags[i].bag_id + "'");
    ev.loss += static_cast<double>(loss);
    const auto pr = softmax_probs(out.logits);
    for (std::size_t k = 0; k < pr.size(); ++k) ev.probs(r, k) = static_cast<double>(pr[k]);
    ev.labels.push_back(ds.labels[i]);
  }
  if (!indices.empty()) ev.loss /= static_cast<double>(indices.size());
  std::vector<std::size_t> seen = ev.labels;
  std::sort(seen.begin(), seen.end());
  if (std::unique(seen.begin(), seen.end()) - seen.begin() >= 2) {
    ev.auroc = auroc_macro(ev.labels, ev.probs);
    ev.ap = average_precision_macro(ev.labels, ev.probs);
  }
  return ev;
}

/// Independent stream seed for (run seed, fold, purpose).
inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), static_cast<std::uint32_t>(salt)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

using LogFn = std::function<void(const std::string&)>;

/// Trains one model on `train_idx`, early-stopping on `val_idx`, and returns
/// the fold record with the best-validation parameters restored.
template <typename T>
FoldResult<T> train_fold(const Dataset& ds, const std::vector<std::size_t>& train_idx,
                         const std::vector<std::size_t>& val_idx, const ModelConfig& mc,
                         const TrainConfig& tc, std::uint64_t seed, const LogFn& log = {}) {
  if (train_idx.empty() || val_idx.empty()) throw ConfigError("empty train or validation split");
  FoldResult<T> res;
  res.n_train = train_idx.size();
  res.n_val = val_idx.size();
  ModelParams<T> params = init_model<T>(mc, fold_seed(seed, 0, 1));
  ModelParams<T> grads = zeros_like(params);
  const auto ptensors = tensors(params);
  const auto gtensors = tensors(grads);
  AdamState<T> adam;
  std::mt19937_64 rng(fold_seed(seed, 0, 2));
  EarlyStopper stopper(tc.patience);
  res.best_params = params;
  std::vector<std::size_t> order = train_idx;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.effective_batch) {
      const std::size_t stop = std::min(order.size(), start + tc.effective_batch);
      for (auto* g : gtensors) g->fill(T(0));
      const T weight = T(1) / static_cast<T>(stop - start);
      for (std::size_t s = start; s < stop; ++s) {
        const std::size_t i = order[s];
        const T loss = loss_and_grad(ds.bags[i], ds.labels[i], mc, params, grads, weight);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite training loss on bag '" + ds.bags[i].bag_id +
                             "' at epoch " + std::to_string(epoch));
        }
        loss_sum += static_cast<double>(loss);
      }
      adam_step(ptensors, gtensors, adam, tc.adam);
    }
    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    const Evaluation val = evaluate(ds, val_idx, mc, params);
    rec.val_loss = val.loss;
    rec.val_auroc = val.auroc;
    res.epochs.push_back(rec);
    const bool stop = stopper.update(rec.val_loss);
    if (stopper.improved_last()) res.best_params = params;
    if (log) {
      log("epoch " + std::to_string(epoch) + " train_loss=" + std::to_string(rec.train_loss) +
          " val_loss=" + std::to_string(rec.val_loss) + " val_auroc=" + std::to_string(rec.val_auroc));
    }
    res.stopped_epoch = epoch;
    if (stop) break;
  }
  res.best_epoch = stopper.best_epoch();
  return res;
}

/// Stratified k-fold protocol: per fold, carve a stratified validation set
/// from the training folds, train with early stopping, restore the best
/// parameters and score the held-out fold.
template <typename T>
TrainRun<T> train(const Dataset& ds, const ModelConfig& mc, const TrainConfig& tc,
                  const LogFn& log = {}) {
  tc.validate();
  if (ds.labels.size() != ds.bags.size()) throw DimensionError("dataset labels/bags differ");
  {
    std::vector<std::size_t> seen = ds.labels;
    std::sort(seen.begin(), seen.end());
    if (std::unique(seen.begin(), seen.end()) - seen.begin() < 2)
      throw ConfigError("training needs at least two classes");
  }
  const auto test_folds = stratified_kfold(ds.labels, tc.folds, tc.seed);
  TrainRun<T> run;
  run.folds.resize(tc.folds);
  std::mutex log_mutex;

  auto run_fold = [&](std::size_t f) {
    std::vector<std::size_t> pool;
    for (std::size_t g = 0; g < tc.folds; ++g)
      if (g != f) pool.insert(pool.end(), test_folds[g].begin(), test_folds[g].end());
    std::sort(pool.begin(), pool.end());
    auto [train_idx, val_idx] =
        stratified_holdout(pool, ds.labels, tc.val_fraction, fold_seed(tc.seed, f, 3));
    LogFn fold_log;
    if (log) {
      fold_log = [&, f](const std::string& s) {
        std::lock_guard<std::mutex> lock(log_mutex);
        log("fold " + std::to_string(f) + " " + s);
      };
    }
    FoldResult<T> r =
        train_fold<T>(ds, train_idx, val_idx, mc, tc, fold_seed(tc.seed, f, 4), fold_log);
    r.fold = f;
    const Evaluation test = evaluate(ds, test_folds[f], mc, r.best_params);
    r.n_test = test_folds[f].size();
    r.test_auroc = test.auroc;
    r.test_ap = test.ap;
    run.folds[f] = std::move(r);
  };

  if (tc.fold_threads <= 1) {
    for (std::size_t f = 0; f < tc.folds; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(tc.folds);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(tc.fold_threads, tc.folds); ++t) {
      pool.emplace_back([&] {
        for (std::size_t f; (f = next.fetch_add(1)) < tc.folds;) {
          try {
            run_fold(f);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<double> aurocs, aps;
  for (const auto& r : run.folds) {
    aurocs.push_back(r.test_auroc);
    aps.push_back(r.test_ap);
  }
  run.auroc = mean_std(aurocs);
  run.ap = mean_std(aps);
  return run;
}

}  // namespace romil
