// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "romil/data.hpp"
#include "romil/error.hpp"
#include "romil/model.hpp"
#include "romil/training.hpp"

namespace romil {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Flat `section.key = value` configuration over a fixed schema. Files use
/// `[section]` headers; `seed` lives outside any section.
class Config {
 public:
  struct Entry {
    std::string value;
    std::string help;
  };

  /// Built-in schema with defaults.
  Config() {
    add("seed", "0", "master seed for every random stream");

    add("synth.task", "arrangement", "arrangement | cooccurrence");
    add("synth.n_bags", "400", "number of bags (even)");
    add("synth.min_instances", "32", "smallest bag");
    add("synth.max_instances", "64", "largest bag");
    add("synth.grid_extent", "16", "grid side G; cells are 0..G-1");
    add("synth.feature_dim", "32", "instance feature width F");
    add("synth.noise_std", "0.2", "background feature noise");
    add("synth.motif_scale", "8", "norm of each motif prototype");
    add("synth.tau", "2", "arrangement distance threshold (grid units)");

    add("grid.patch_size_px", "256", "patch side P in pixels");

    add("model.arm", "ro-abmil", model_arms_joined());
    add("model.d_model", "512", "token width after the input projection");
    add("model.n_heads", "8", "encoder attention heads");
    add("model.pool_heads", "8", "ABMIL pooling heads");
    add("model.ffn_mult", "4", "encoder FFN expansion r");
    add("model.encoder_layers", "1", "encoder depth for arms with an encoder");
    add("model.rope_base", "10000", "RoPE frequency base");
    add("model.kernel", "naive", "naive | streaming (inference only)");
    add("model.query_chunk", "128", "streaming query chunk B_q");
    add("model.key_chunk", "128", "streaming key chunk B_k");

    add("train.learning_rate", "1e-4", "Adam step size");
    add("train.adam_beta1", "0.9", "");
    add("train.adam_beta2", "0.999", "");
    add("train.adam_eps", "1e-8", "");
    add("train.effective_batch", "4", "bags per optimizer step");
    add("train.max_epochs", "50", "");
    add("train.patience", "10", "early-stop patience on validation loss");
    add("train.val_fraction", "0.1", "validation share carved from training folds");
    add("train.folds", "10", "cross-validation folds");
    add("train.fold_threads", "1", "folds trained concurrently");

    add("bench.n_list", "256,1024,2048,16384", "sequence lengths");
    add("bench.query_chunk", "128", "");
    add("bench.key_chunk", "128", "");
    add("bench.head_dim", "64", "");
    add("bench.naive_max_n", "2048", "largest N compared against the naive kernel");
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.value = value;
  }

  const std::string& str(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second.value;
  }

  std::int64_t integer(const std::string& key) const {
    const std::string& v = str(key);
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno == ERANGE)
      throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
  }

  std::size_t count(const std::string& key) const {
    const std::int64_t x = integer(key);
    if (x < 0) throw ConfigError(key + ": must be non-negative, got " + std::to_string(x));
    return static_cast<std::size_t>(x);
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(x))
      throw ConfigError(key + ": expected a finite number, got '" + v + "'");
    return x;
  }

  std::vector<std::size_t> count_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& part : detail::split(str(key), ',')) {
      const std::string t = detail::trim(part);
      char* end = nullptr;
      const long long x = std::strtoll(t.c_str(), &end, 10);
      if (t.empty() || *end != '\0' || x < 1)
        throw ConfigError(key + ": expected a list of positive integers, got '" + str(key) + "'");
      out.push_back(static_cast<std::size_t>(x));
    }
    return out;
  }

  /// Applies `key=value`.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }

  /// Reads a sectioned file over the current values.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line, section;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string full = section.empty() ? key : section + "." + key;
      try {
        set(full, detail::trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  /// Resolved configuration in the file format; `load_file` reads it back.
  std::string render() const {
    std::ostringstream os;
    os << "seed = " << str("seed") << "\n";
    std::string section;
    for (const auto& [key, e] : entries_) {
      const auto dot = key.find('.');
      if (dot == std::string::npos) continue;
      const std::string s = key.substr(0, dot);
      if (s != section) {
        os << "\n[" << s << "]\n";
        section = s;
      }
      os << key.substr(dot + 1) << " = " << e.value << "\n";
    }
    return os.str();
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  void add(const std::string& key, const std::string& def, const std::string& help) {
    entries_[key] = {def, help};
  }

  std::map<std::string, Entry> entries_;
};

inline std::uint64_t seed_of(const Config& c) {
  const std::int64_t s = c.integer("seed");
  if (s < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

inline SynthConfig synth_config(const Config& c) {
  SynthConfig s;
  s.task = parse_synth_task(c.str("synth.task"));
  s.n_bags = c.count("synth.n_bags");
  s.min_instances = c.count("synth.min_instances");
  s.max_instances = c.count("synth.max_instances");
  s.grid_extent = c.integer("synth.grid_extent");
  s.feature_dim = c.count("synth.feature_dim");
  s.noise_std = c.real("synth.noise_std");
  s.motif_scale = c.real("synth.motif_scale");
  s.tau = c.integer("synth.tau");
  s.seed = seed_of(c);
  s.validate();
  return s;
}

inline AttentionKernel parse_kernel(const std::string& s) {
  if (s == "naive") return AttentionKernel::naive;
  if (s == "streaming") return AttentionKernel::streaming;
  throw ConfigError("unknown attention kernel '" + s + "' (naive, streaming)");
}

/// Model configuration for `input_dim` features and `n_classes` labels.
inline ModelConfig model_config(const Config& c, std::size_t input_dim, std::size_t n_classes) {
  ModelBase b;
  b.input_dim = input_dim;
  b.n_classes = n_classes;
  b.d_model = c.count("model.d_model");
  b.n_heads = c.count("model.n_heads");
  b.pool_heads = c.count("model.pool_heads");
  b.ffn_mult = c.count("model.ffn_mult");
  b.encoder_layers = c.count("model.encoder_layers");
  b.rope_base = c.real("model.rope_base");
  b.kernel = parse_kernel(c.str("model.kernel"));
  b.query_chunk = c.count("model.query_chunk");
  b.key_chunk = c.count("model.key_chunk");
  if (b.d_model == 0 || b.n_heads == 0 || b.pool_heads == 0 || b.ffn_mult == 0)
    throw ConfigError("model widths and head counts must be >= 1");
  if (b.d_model % b.n_heads != 0 || b.d_model % b.pool_heads != 0)
    throw ConfigError("model.d_model must be divisible by model.n_heads and model.pool_heads");
  if (b.encoder_layers == 0) throw ConfigError("model.encoder_layers must be >= 1");
  if (!(b.rope_base > 1.0)) throw ConfigError("model.rope_base must be > 1");
  if (b.query_chunk == 0 || b.key_chunk == 0) throw ConfigError("chunk sizes must be >= 1");
  ModelConfig mc = arm_config(c.str("model.arm"), b);
  if (uses_rope(mc.posenc) && (mc.width / mc.n_heads) % 4 != 0)
    throw ConfigError("RoPE needs head_dim divisible by 4; d_model/n_heads = " +
                      std::to_string(mc.width / mc.n_heads));
  if (uses_abs(mc.posenc) && mc.width % 4 != 0)
    throw ConfigError("absolute encoding needs d_model divisible by 4");
  return mc;
}

inline TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.adam.learning_rate = c.real("train.learning_rate");
  t.adam.beta1 = c.real("train.adam_beta1");
  t.adam.beta2 = c.real("train.adam_beta2");
  t.adam.epsilon = c.real("train.adam_eps");
  t.effective_batch = c.count("train.effective_batch");
  t.max_epochs = c.count("train.max_epochs");
  t.patience = c.count("train.patience");
  t.val_fraction = c.real("train.val_fraction");
  t.folds = c.count("train.folds");
  t.fold_threads = c.count("train.fold_threads");
  t.seed = seed_of(c);
  if (!(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0 && t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(t.adam.epsilon > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Parameter snapshots
// ---------------------------------------------------------------------------

/// Trained parameters plus everything needed to rebuild the model: model
/// shape and the label-name order used in training.
struct Snapshot {
  ModelConfig model;
  std::vector<std::string> label_names;
  ModelParams<float> params;
};

/// Text snapshot; values are hex floats so the round trip is bit-exact.
inline void save_snapshot(const std::filesystem::path& path, const ModelConfig& mc,
                          const std::vector<std::string>& label_names, ModelParams<float>& p) {
  std::ostringstream os;
  os << "romil-snapshot 1\n"
     << "input_dim=" << mc.input_dim << "\nwidth=" << mc.width
     << "\nhidden_layers=" << mc.hidden_layers << "\nencoder_layers=" << mc.encoder_layers
     << "\nposenc=" << to_string(mc.posenc) << "\nn_heads=" << mc.n_heads
     << "\nffn_mult=" << mc.ffn_mult << "\npool=" << to_string(mc.pool)
     << "\npool_heads=" << mc.pool_heads << "\nn_classes=" << mc.n_classes;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", mc.rope_base);
  os << "\nrope_base=" << buf << "\nkernel=" << to_string(mc.kernel)
     << "\nquery_chunk=" << mc.query_chunk << "\nkey_chunk=" << mc.key_chunk << "\nlabels=";
  for (std::size_t i = 0; i < label_names.size(); ++i) os << (i ? "," : "") << label_names[i];
  os << "\n";
  for (auto* m : tensors(p)) {
    os << "tensor " << m->rows() << " " << m->cols() << "\n";
    for (std::size_t i = 0; i < m->size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%a", static_cast<double>(m->data()[i]));
      os << buf << ((i + 1) % m->cols() == 0 ? "\n" : " ");
    }
  }
  detail::write_text(path, os.str());
}

inline Snapshot load_snapshot(const std::filesystem::path& path) {
  std::istringstream in(detail::read_text(path));
  auto fail = [&](const std::string& why) { return FormatError(path.string() + ": " + why); };
  std::string line;
  if (!std::getline(in, line) || line != "romil-snapshot 1") throw fail("not a parameter snapshot");
  std::map<std::string, std::string> kv;
  const std::vector<std::string> keys = {"input_dim", "width", "hidden_layers", "encoder_layers",
                                         "posenc", "n_heads", "ffn_mult", "pool", "pool_heads",
                                         "n_classes", "rope_base", "kernel", "query_chunk",
                                         "key_chunk", "labels"};
  for (const auto& k : keys) {
    if (!std::getline(in, line)) throw fail("truncated header");
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.substr(0, eq) != k) throw fail("expected field '" + k + "'");
    kv[k] = line.substr(eq + 1);
  }
  Snapshot s;
  auto num = [&](const std::string& k) {
    try {
      return static_cast<std::size_t>(detail::parse_int<long long>(kv[k], k));
    } catch (const FormatError&) {
      throw fail("bad value for " + k);
    }
  };
  ModelConfig& mc = s.model;
  try {
    mc.input_dim = num("input_dim");
    mc.width = num("width");
    mc.hidden_layers = num("hidden_layers");
    mc.encoder_layers = num("encoder_layers");
    mc.posenc = parse_posenc(kv["posenc"]);
    mc.n_heads = num("n_heads");
    mc.ffn_mult = num("ffn_mult");
    mc.pool = parse_pool_head(kv["pool"]);
    mc.pool_heads = num("pool_heads");
    mc.n_classes = num("n_classes");
    mc.rope_base = std::strtod(kv["rope_base"].c_str(), nullptr);
    mc.kernel = parse_kernel(kv["kernel"]);
    mc.query_chunk = num("query_chunk");
    mc.key_chunk = num("key_chunk");
  } catch (const ConfigError& e) {
    throw fail(e.what());
  }
  s.label_names = detail::split(kv["labels"], ',');
  if (s.label_names.size() != mc.n_classes) throw fail("label count differs from n_classes");
  s.params = ModelParams<float>(mc);
  for (auto* m : tensors(s.params)) {
    std::string tag;
    std::size_t r = 0, c = 0;
    if (!(in >> tag >> r >> c) || tag != "tensor") throw fail("missing tensor record");
    if (r != m->rows() || c != m->cols())
      throw fail("tensor shape " + std::to_string(r) + "x" + std::to_string(c) + " does not match " +
                 m->shape_str());
    for (std::size_t i = 0; i < m->size(); ++i) {
      std::string tok;
      if (!(in >> tok)) throw fail("truncated tensor data");
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (*end != '\0' || !std::isfinite(v)) throw fail("bad tensor value '" + tok + "'");
      m->data()[i] = static_cast<float>(v);
    }
  }
  std::string extra;
  if (in >> extra) throw fail("trailing data after last tensor");
  return s;
}

}  // namespace romil
