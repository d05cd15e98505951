// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors
//
// romil: synth | gridify | train | eval | bench-attention

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "romil/attention.hpp"
#include "romil/config.hpp"
#include "romil/data.hpp"
#include "romil/model.hpp"
#include "romil/training.hpp"

namespace fs = std::filesystem;
using namespace romil;

namespace {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kNumeric = 5,
};

struct UsageError : Error {
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "sectioned key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--override", c.overrides, "section.key=value, may repeat");
}

Config resolve(const Common& c) {
  Config cfg;
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  for (const auto& kv : c.overrides) cfg.apply_override(kv);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

// --- synth ----------------------------------------------------------------

int cmd_synth(const Common& c) {
  const Config cfg = resolve(c);
  const SynthConfig sc = synth_config(cfg);
  const auto P = cfg.integer("grid.patch_size_px");
  const SynthDataset syn = synth_generate(sc);
  save_dataset(syn.data, c.out, P);
  detail::write_text(fs::path(c.out) / "config.txt", cfg.render());
  std::size_t pos = 0;
  for (auto l : syn.data.labels) pos += l;
  std::cout << "wrote " << syn.data.size() << " bags (" << syn.data.size() - pos << " neg, " << pos
            << " pos) to " << c.out << "\n";
  return kOk;
}

// --- gridify ---------------------------------------------------------------

/// Raw table: header bag_id,label,x_pixel,y_pixel,f0,f1,...; one row per
/// patch, grouped by bag_id in first-appearance order.
int cmd_gridify(const Common& c, const std::string& input) {
  const Config cfg = resolve(c);
  GridConfig g{cfg.integer("grid.patch_size_px")};
  if (g.patch_size_px < 1) throw ConfigError("grid.patch_size_px must be >= 1");
  std::istringstream in(detail::read_text(input));
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw FormatError(input + ": empty input file");
  const auto header = detail::split(detail::trim(line), ',');
  if (header.size() < 5 || header[0] != "bag_id" || header[1] != "label" || header[2] != "x_pixel" ||
      header[3] != "y_pixel") {
    throw FormatError(input + ": expected header bag_id,label,x_pixel,y_pixel,f0,...");
  }
  const std::size_t F = header.size() - 4;

  struct Raw {
    std::string label;
    std::vector<PixelCoord> px;
    std::vector<float> feats;
  };
  std::vector<std::string> order;
  std::map<std::string, Raw> raw;
  std::vector<std::string> problems;
  std::size_t rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(detail::trim(line), ',');
    const std::string where = input + " row " + std::to_string(rowno);
    if (cells.size() != header.size()) {
      problems.push_back(where + ": expected " + std::to_string(header.size()) + " columns");
      continue;
    }
    auto [it, fresh] = raw.try_emplace(cells[0]);
    if (fresh) {
      order.push_back(cells[0]);
      it->second.label = cells[1];
    } else if (it->second.label != cells[1]) {
      problems.push_back(where + ": bag '" + cells[0] + "' has conflicting labels");
      continue;
    }
    try {
      it->second.px.push_back({detail::parse_int<std::int64_t>(cells[2], "x_pixel"),
                               detail::parse_int<std::int64_t>(cells[3], "y_pixel")});
      for (std::size_t j = 0; j < F; ++j) {
        char* end = nullptr;
        const float v = std::strtof(cells[4 + j].c_str(), &end);
        if (cells[4 + j].empty() || *end != '\0' || !std::isfinite(v))
          throw FormatError("feature " + header[4 + j] + ": '" + cells[4 + j] + "' is not a finite number");
        it->second.feats.push_back(v);
      }
    } catch (const FormatError& e) {
      problems.push_back(where + ": " + e.what());
      it->second.px.resize(it->second.feats.size() / F);
      it->second.feats.resize(it->second.px.size() * F);
    }
  }
  if (order.empty() && problems.empty()) throw FormatError(input + ": no patch rows");

  Dataset ds;
  std::set<std::string> names;
  for (const auto& id : order) names.insert(raw[id].label);
  ds.label_names.assign(names.begin(), names.end());
  for (const auto& id : order) {
    Raw& r = raw[id];
    try {
      const auto grid = quantize_coords(r.px, g);
      const std::size_t label =
          std::find(ds.label_names.begin(), ds.label_names.end(), r.label) - ds.label_names.begin();
      PatchBag b = build_bag(Matrix<float>::from_data(r.px.size(), F, r.feats), grid, id, label);
      ds.bags.push_back(std::move(b));
      ds.labels.push_back(label);
    } catch (const Error& e) {
      problems.push_back("bag '" + id + "': " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "gridify found " + std::to_string(problems.size()) + " problem(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  save_dataset(ds, c.out, g.patch_size_px);
  std::cout << "wrote " << ds.size() << " bags to " << c.out << "\n";
  return kOk;
}

// --- train -----------------------------------------------------------------

void check_arm(const std::string& arm) {
  const auto& arms = model_arms();
  if (std::find(arms.begin(), arms.end(), arm) == arms.end())
    throw UsageError("unknown model arm '" + arm + "'; valid arms: " + model_arms_joined());
}

int cmd_train(const Common& c, const std::string& manifest) {
  const Config cfg = resolve(c);
  check_arm(cfg.str("model.arm"));
  const TrainConfig tc = train_config(cfg);
  const Dataset ds = load_dataset(manifest);
  const ModelConfig mc = model_config(cfg, ds.bags.front().feature_dim(), ds.n_classes());
  if (mc.kernel != AttentionKernel::naive)
    throw ConfigError("training differentiates through the naive kernel; set model.kernel=naive");

  const auto t0 = std::chrono::steady_clock::now();
  TrainRun<float> run = train<float>(ds, mc, tc, [](const std::string& s) { std::cerr << s << "\n"; });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path out(c.out);
  fs::create_directories(out);
  std::ostringstream res, metrics, epochs, table;
  res << "# romil train results\n"
      << "manifest = " << fs::path(manifest).filename().string() << "\n"
      << "seed = " << tc.seed << "\n"
      << "n_bags = " << ds.size() << "\n"
      << "n_classes = " << ds.n_classes() << "\n"
      << "parameters = " << parameter_count(mc) << "\n";
  metrics << "fold,n_train,n_val,n_test,stopped_epoch,best_epoch,test_auroc,test_ap\n";
  epochs << "fold,epoch,train_loss,val_loss,val_auroc\n";
  table << std::left << std::setw(6) << "fold" << std::setw(8) << "epochs" << std::setw(6) << "best"
        << std::setw(10) << "auroc" << "ap\n";
  for (auto& f : run.folds) {
    res << "fold." << f.fold << ".auroc = " << fmt(f.test_auroc) << "\n"
        << "fold." << f.fold << ".ap = " << fmt(f.test_ap) << "\n"
        << "fold." << f.fold << ".stopped_epoch = " << f.stopped_epoch << "\n"
        << "fold." << f.fold << ".best_epoch = " << f.best_epoch << "\n";
    metrics << f.fold << "," << f.n_train << "," << f.n_val << "," << f.n_test << "," << f.stopped_epoch
            << "," << f.best_epoch << "," << fmt(f.test_auroc) << "," << fmt(f.test_ap) << "\n";
    for (std::size_t e = 0; e < f.epochs.size(); ++e) {
      const auto& r = f.epochs[e];
      epochs << f.fold << "," << e + 1 << "," << fmt(r.train_loss) << "," << fmt(r.val_loss) << ","
             << fmt(r.val_auroc) << "\n";
    }
    table << std::left << std::setw(6) << f.fold << std::setw(8) << f.stopped_epoch << std::setw(6)
          << f.best_epoch << std::setw(10) << fmt(f.test_auroc, 4) << fmt(f.test_ap, 4) << "\n";
    save_snapshot(out / ("fold_" + std::to_string(f.fold) + ".params"), mc, ds.label_names, f.best_params);
  }
  res << "auroc.mean = " << fmt(run.auroc.mean) << "\n"
      << "auroc.std = " << fmt(run.auroc.std) << "\n"
      << "ap.mean = " << fmt(run.ap.mean) << "\n"
      << "ap.std = " << fmt(run.ap.std) << "\n"
      << "\n# resolved config\n"
      << cfg.render();
  detail::write_text(out / "results.txt", res.str());
  detail::write_text(out / "metrics.csv", metrics.str());
  detail::write_text(out / "epochs.csv", epochs.str());
  std::cout << table.str() << "AUROC " << fmt(run.auroc.mean, 4) << " +- " << fmt(run.auroc.std, 4)
            << "   AP " << fmt(run.ap.mean, 4) << " +- " << fmt(run.ap.std, 4) << "\n";
  std::cerr << "trained " << run.folds.size() << " folds in " << fmt(secs, 1) << " s\n";
  return kOk;
}

// --- eval ------------------------------------------------------------------

int cmd_eval(const Common& c, const std::string& manifest, const std::string& params) {
  const Config cfg = resolve(c);
  Snapshot snap = load_snapshot(params);
  // Inference-only knobs come from the config; the shape from the snapshot.
  snap.model.kernel = parse_kernel(cfg.str("model.kernel"));
  snap.model.query_chunk = cfg.count("model.query_chunk");
  snap.model.key_chunk = cfg.count("model.key_chunk");
  if (snap.model.query_chunk == 0 || snap.model.key_chunk == 0) throw ConfigError("chunk sizes must be >= 1");
  const Dataset ds = load_dataset(manifest, snap.label_names);
  for (const auto& b : ds.bags)
    if (b.feature_dim() != snap.model.input_dim)
      throw DimensionError("bag '" + b.bag_id + "' has feature dim " + std::to_string(b.feature_dim()) +
                           ", snapshot expects " + std::to_string(snap.model.input_dim));

  const fs::path out(c.out);
  fs::create_directories(out / "alpha");
  std::ostringstream preds;
  preds << "bag_id,label";
  for (const auto& n : ds.label_names) preds << ",p_" << n;
  preds << "\n";
  Matrix<double> probs(ds.size(), ds.n_classes());
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const PatchBag& bag = ds.bags[i];
    const PoolOutput<float> o = model_forward(bag, snap.model, snap.params);
    const float l = cross_entropy_loss(o.logits, ds.labels[i]).loss;
    if (!std::isfinite(l)) throw NumericError("non-finite loss on bag '" + bag.bag_id + "'");
    loss += l;
    const auto p = softmax_probs(o.logits);
    preds << bag.bag_id << "," << ds.label_names[ds.labels[i]];
    for (std::size_t k = 0; k < p.size(); ++k) {
      probs(i, k) = p[k];
      preds << "," << fmt(p[k]);
    }
    preds << "\n";
    // Head-mean attention per instance.
    std::ostringstream a;
    a << "instance_index,x_grid,y_grid,alpha\n";
    for (std::size_t n = 0; n < bag.size(); ++n) {
      double s = 0.0;
      for (std::size_t h = 0; h < o.alpha.rows(); ++h) s += o.alpha(h, n);
      a << n << "," << bag.coords[n].x << "," << bag.coords[n].y << ","
        << fmt(s / static_cast<double>(o.alpha.rows()), 8) << "\n";
    }
    detail::write_text(out / "alpha" / (bag.bag_id + ".csv"), a.str());
  }
  loss /= static_cast<double>(ds.size());
  std::ostringstream res;
  res << "# romil eval results\n"
      << "params = " << fs::path(params).filename().string() << "\n"
      << "n_bags = " << ds.size() << "\n"
      << "loss = " << fmt(loss) << "\n";
  std::vector<std::size_t> seen = ds.labels;
  std::sort(seen.begin(), seen.end());
  if (std::unique(seen.begin(), seen.end()) - seen.begin() >= 2) {
    const double auroc = auroc_macro(ds.labels, probs);
    const double ap = average_precision_macro(ds.labels, probs);
    res << "auroc = " << fmt(auroc) << "\nap = " << fmt(ap) << "\n";
    std::cout << "AUROC " << fmt(auroc, 4) << "   AP " << fmt(ap, 4) << "   loss " << fmt(loss, 4) << "\n";
  } else {
    res << "auroc = nan\nap = nan\n";
    std::cout << "single class present: AUROC/AP undefined; loss " << fmt(loss, 4) << "\n";
  }
  res << "\n# resolved config\n" << cfg.render();
  detail::write_text(out / "eval.txt", res.str());
  detail::write_text(out / "predictions.csv", preds.str());
  return kOk;
}

// --- bench-attention -------------------------------------------------------

int cmd_bench(const Common& c) {
  const Config cfg = resolve(c);
  const auto ns = cfg.count_list("bench.n_list");
  const std::size_t bq = cfg.count("bench.query_chunk"), bk = cfg.count("bench.key_chunk");
  const std::size_t dh = cfg.count("bench.head_dim");
  const std::size_t naive_max = cfg.count("bench.naive_max_n");
  if (bq == 0 || bk == 0 || dh == 0) throw ConfigError("bench chunk sizes and head_dim must be >= 1");
  std::mt19937_64 rng(seed_of(cfg));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::ostringstream csv;
  csv << "N,B_q,B_k,head_dim,peak_scratch_bytes,dense_score_bytes,wall_ms,max_dev\n";
  for (std::size_t n : ns) {
    auto rnd = [&] {
      Matrix<float> m(n, dh);
      for (float& v : m.values()) v = normal(rng);
      return m;
    };
    const Matrix<float> q = rnd(), k = rnd(), v = rnd();
    const std::vector<bool> mask(n, true);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    AttentionWorkspace<float> ws(bq, bk);
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix<float> s = attend_streaming(q, k, v, mask, scale, ws);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    std::string dev = "skipped";
    if (n <= naive_max) {
      const Matrix<float> ref = attend_naive(q, k, v, mask, scale);
      dev = fmt(static_cast<double>(max_abs_diff(s, ref)), 9);
    }
    csv << n << "," << bq << "," << bk << "," << dh << "," << ws.peak_bytes() << ","
        << static_cast<std::uint64_t>(n) * n * sizeof(float) << "," << fmt(ms, 3) << "," << dev << "\n";
  }
  fs::create_directories(c.out);
  detail::write_text(fs::path(c.out) / "bench_attention.csv", csv.str());
  std::cout << csv.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Position-aware multiple-instance learning on spatial feature bags"};
  app.require_subcommand(1);

  Common synth_c, grid_c, train_c, eval_c, bench_c;
  std::string grid_input, train_manifest, eval_manifest, eval_params;

  auto* synth = app.add_subcommand("synth", "generate a synthetic spatial-bag dataset");
  add_common(synth, synth_c);
  auto* gridify = app.add_subcommand("gridify", "quantize raw pixel coordinates into bag files");
  add_common(gridify, grid_c);
  gridify->add_option("--input", grid_input, "CSV bag_id,label,x_pixel,y_pixel,f0,...")->required();
  auto* trainc = app.add_subcommand("train", "k-fold training and evaluation of one model arm");
  add_common(trainc, train_c);
  trainc->add_option("--manifest", train_manifest, "dataset manifest.csv")->required()->check(CLI::ExistingFile);
  auto* evalc = app.add_subcommand("eval", "score a manifest with a saved parameter snapshot");
  add_common(evalc, eval_c);
  evalc->add_option("--manifest", eval_manifest, "dataset manifest.csv")->required()->check(CLI::ExistingFile);
  evalc->add_option("--params", eval_params, "snapshot written by train")->required()->check(CLI::ExistingFile);
  auto* bench = app.add_subcommand("bench-attention", "streaming vs naive attention: memory and deviation");
  add_common(bench, bench_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_c);
    if (*gridify) return cmd_gridify(grid_c, grid_input);
    if (*trainc) return cmd_train(train_c, train_manifest);
    if (*evalc) return cmd_eval(eval_c, eval_manifest, eval_params);
    if (*bench) return cmd_bench(bench_c);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
