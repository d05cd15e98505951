// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "romil/dataset.hpp"
#include "romil/error.hpp"
#include "romil/grid.hpp"
#include "romil/matrix.hpp"

namespace romil {

namespace fs = std::filesystem;

inline constexpr const char* kMetaFile = "meta.txt";
inline constexpr const char* kFeaturesFile = "features.f32";
inline constexpr const char* kCoordsFile = "coords.csv";
inline constexpr const char* kManifestFile = "manifest.csv";

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + p.string() + "'");
  out << text;
}

template <typename Int>
Int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<Int>(v);
  } catch (const std::exception&) {
    throw FormatError(what + ": '" + s + "' is not an integer");
  }
}

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bag file set: <dir>/meta.txt, <dir>/features.f32, <dir>/coords.csv
// ---------------------------------------------------------------------------

/// Writes one bag directory. Grid coordinates are stored as pixel positions
/// (grid × P) so load-time quantization recovers them exactly.
inline void save_bag(const PatchBag& bag, const fs::path& dir, std::int64_t patch_size_px) {
  validate_bag(bag);
  if (std::find(bag.mask.begin(), bag.mask.end(), false) != bag.mask.end()) {
    throw ValidationError("bag '" + bag.bag_id + "': padded bags cannot be serialized");
  }
  if (patch_size_px < 1) throw ConfigError("patch_size_px must be >= 1");
  fs::create_directories(dir);
  std::ostringstream meta;
  meta << "bag_id=" << bag.bag_id << "\n"
       << "n_patches=" << bag.size() << "\n"
       << "feature_dim=" << bag.feature_dim() << "\n"
       << "patch_size_px=" << patch_size_px << "\n";
  detail::write_text(dir / kMetaFile, meta.str());

  std::vector<std::uint32_t> words(bag.features.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, &bag.features.data()[i], sizeof(w));
    words[i] = detail::to_little_endian(w);
  }
  std::ofstream blob(dir / kFeaturesFile, std::ios::binary);
  if (!blob) throw FormatError("cannot write '" + (dir / kFeaturesFile).string() + "'");
  blob.write(reinterpret_cast<const char*>(words.data()),
             static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));

  std::ostringstream coords;
  coords << "x_pixel,y_pixel\n";
  for (const auto& c : bag.coords) coords << c.x * patch_size_px << "," << c.y * patch_size_px << "\n";
  detail::write_text(dir / kCoordsFile, coords.str());
}

struct BagMeta {
  std::string bag_id;
  std::size_t n_patches = 0;
  std::size_t feature_dim = 0;
  std::int64_t patch_size_px = 0;
};

inline BagMeta read_bag_meta(const fs::path& dir) {
  const fs::path path = dir / kMetaFile;
  std::map<std::string, std::string> kv;
  std::istringstream is(detail::read_text(path));
  std::string line;
  while (std::getline(is, line)) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ": malformed line '" + line + "'");
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  for (const char* key : {"bag_id", "n_patches", "feature_dim", "patch_size_px"}) {
    if (!kv.count(key)) throw FormatError(path.string() + ": missing descriptor field '" + key + "'");
  }
  BagMeta m;
  m.bag_id = kv["bag_id"];
  m.n_patches = detail::parse_int<std::size_t>(kv["n_patches"], path.string() + " n_patches");
  m.feature_dim = detail::parse_int<std::size_t>(kv["feature_dim"], path.string() + " feature_dim");
  m.patch_size_px = detail::parse_int<std::int64_t>(kv["patch_size_px"], path.string() + " patch_size_px");
  if (m.patch_size_px < 1) throw FormatError(path.string() + ": patch_size_px must be >= 1");
  return m;
}

inline std::vector<PixelCoord> read_pixel_coords(const fs::path& path) {
  std::istringstream is(detail::read_text(path));
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != "x_pixel,y_pixel") {
    throw FormatError(path.string() + ": expected header 'x_pixel,y_pixel'");
  }
  std::vector<PixelCoord> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != 2) {
      throw FormatError(path.string() + ": row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " columns, expected 2");
    }
    out.push_back({detail::parse_int<std::int64_t>(cells[0], path.string() + " x_pixel"),
                   detail::parse_int<std::int64_t>(cells[1], path.string() + " y_pixel")});
  }
  return out;
}

inline PatchBag load_bag(const fs::path& dir) {
  const BagMeta meta = read_bag_meta(dir);
  const fs::path blob_path = dir / kFeaturesFile;
  const std::string blob = detail::read_text(blob_path);
  const std::size_t expected = meta.n_patches * meta.feature_dim * sizeof(float);
  if (blob.size() != expected) {
    throw FormatError(blob_path.string() + ": expected " + std::to_string(expected) +
                      " bytes (n_patches × feature_dim × 4), found " + std::to_string(blob.size()));
  }
  const auto pixels = read_pixel_coords(dir / kCoordsFile);
  if (pixels.size() != meta.n_patches) {
    throw FormatError((dir / kCoordsFile).string() + ": " + std::to_string(pixels.size()) +
                      " coordinate rows but descriptor n_patches=" + std::to_string(meta.n_patches));
  }
  Matrix<float> features(meta.n_patches, meta.feature_dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, blob.data() + i * sizeof(w), sizeof(w));
    w = detail::to_little_endian(w);
    std::memcpy(&features.data()[i], &w, sizeof(w));
  }
  try {
    auto coords = quantize_coords(pixels, GridConfig{meta.patch_size_px});
    return build_bag(std::move(features), std::move(coords), meta.bag_id);
  } catch (const Error& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifest: CSV with header bag_id,label,path (paths relative to the file)
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string bag_id;
  std::string label_name;
  std::size_t label = 0;
  fs::path path;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> label_names;  // index → name
};

/// Parses and validates a manifest. Label names map to contiguous indices in
/// name-sorted order, unless `known_labels` pins the mapping (then any other
/// name is an error). All row problems are collected into one error.
inline Manifest load_manifest(const fs::path& path,
                              const std::optional<std::vector<std::string>>& known_labels = std::nullopt) {
  std::istringstream is(detail::read_text(path));
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != "bag_id,label,path") {
    throw FormatError(path.string() + ": expected header 'bag_id,label,path'");
  }
  Manifest m;
  std::vector<std::string> problems;
  std::set<std::string> ids;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(detail::trim(line), ',');
    const std::string where = "row " + std::to_string(row);
    if (cells.size() != 3) {
      problems.push_back(where + ": expected 3 columns, found " + std::to_string(cells.size()));
      continue;
    }
    ManifestEntry e{cells[0], cells[1], 0, path.parent_path() / cells[2]};
    if (!ids.insert(e.bag_id).second) problems.push_back(where + ": duplicate bag_id '" + e.bag_id + "'");
    if (!fs::exists(e.path / kMetaFile)) {
      problems.push_back(where + " (" + e.bag_id + "): missing bag file set at '" + e.path.string() + "'");
    }
    m.entries.push_back(std::move(e));
  }
  if (known_labels) {
    m.label_names = *known_labels;
  } else {
    std::set<std::string> names;
    for (const auto& e : m.entries) names.insert(e.label_name);
    m.label_names.assign(names.begin(), names.end());
  }
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    auto& e = m.entries[i];
    const auto it = std::find(m.label_names.begin(), m.label_names.end(), e.label_name);
    if (it == m.label_names.end()) {
      problems.push_back("bag '" + e.bag_id + "': unknown label name '" + e.label_name + "'");
    } else {
      e.label = static_cast<std::size_t>(it - m.label_names.begin());
    }
  }
  if (m.entries.empty()) problems.push_back("no entries");
  if (!problems.empty()) {
    std::string msg = path.string() + ": manifest errors:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw FormatError(msg);
  }
  return m;
}

inline void save_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  os << "bag_id,label,path\n";
  for (const auto& e : entries) os << e.bag_id << "," << e.label_name << "," << e.path.generic_string() << "\n";
  detail::write_text(path, os.str());
}

inline Dataset load_dataset(const fs::path& manifest_path,
                            const std::optional<std::vector<std::string>>& known_labels = std::nullopt) {
  const Manifest m = load_manifest(manifest_path, known_labels);
  Dataset ds;
  ds.label_names = m.label_names;
  for (const auto& e : m.entries) {
    PatchBag b = load_bag(e.path);
    if (b.bag_id != e.bag_id) {
      throw FormatError(manifest_path.string() + ": bag '" + e.bag_id + "' descriptor says '" + b.bag_id + "'");
    }
    if (!ds.bags.empty() && b.feature_dim() != ds.bags.front().feature_dim()) {
      throw FormatError(manifest_path.string() + ": bag '" + e.bag_id + "' feature dim " +
                        std::to_string(b.feature_dim()) + " differs from " +
                        std::to_string(ds.bags.front().feature_dim()));
    }
    b.label = e.label;
    ds.labels.push_back(e.label);
    ds.bags.push_back(std::move(b));
  }
  return ds;
}

/// Writes `<dir>/bags/<bag_id>/` for every bag plus `<dir>/manifest.csv`.
inline void save_dataset(const Dataset& ds, const fs::path& dir, std::int64_t patch_size_px) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& b = ds.bags[i];
    const fs::path rel = fs::path("bags") / b.bag_id;
    save_bag(b, dir / rel, patch_size_px);
    entries.push_back({b.bag_id, ds.label_names.at(ds.labels[i]), ds.labels[i], rel});
  }
  save_manifest(dir / kManifestFile, entries);
}

// ---------------------------------------------------------------------------
// Synthetic spatial bags
// ---------------------------------------------------------------------------

enum class SynthTask { arrangement, cooccurrence };

inline SynthTask parse_synth_task(const std::string& s) {
  if (s == "arrangement") return SynthTask::arrangement;
  if (s == "cooccurrence") return SynthTask::cooccurrence;
  throw ConfigError("unknown synth task '" + s + "' (arrangement, cooccurrence)");
}

inline const char* to_string(SynthTask t) {
  return t == SynthTask::arrangement ? "arrangement" : "cooccurrence";
}

struct SynthConfig {
  SynthTask task = SynthTask::arrangement;
  std::size_t n_bags = 400;
  std::size_t min_instances = 32;
  std::size_t max_instances = 64;
  std::int64_t grid_extent = 16;
  std::size_t feature_dim = 32;
  double noise_std = 1.0;
  double motif_scale = 3.0;  // norm of each motif prototype
  std::int64_t tau = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_bags == 0 || n_bags % 2 != 0) throw ConfigError("n_bags must be even and positive");
    if (feature_dim < 4) throw ConfigError("feature_dim must be >= 4");
    if (min_instances < 2 || min_instances > max_instances) {
      throw ConfigError("instances_per_bag range must satisfy 2 <= min <= max");
    }
    if (grid_extent < 1 || static_cast<std::size_t>(grid_extent * grid_extent) < max_instances) {
      throw ConfigError("grid_extent " + std::to_string(grid_extent) + " cannot hold " +
                        std::to_string(max_instances) + " distinct patches");
    }
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (task == SynthTask::arrangement) {
      if (tau < 1 || tau >= grid_extent) throw ConfigError("tau must satisfy 1 <= tau < grid_extent");
      if (3 * tau > grid_extent - 1) {
        throw ConfigError("infeasible geometry: motifs at Chebyshev distance >= 3*tau=" +
                          std::to_string(3 * tau) + " do not fit in grid_extent=" +
                          std::to_string(grid_extent));
      }
    }
  }
};

inline std::int64_t chebyshev(const GridCoord& a, const GridCoord& b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

/// Arrangement label rule: 1 if the motifs are within τ, 0 if at least 3τ
/// apart; the band in between is never generated.
inline std::optional<std::size_t> arrangement_label(const GridCoord& a, const GridCoord& b,
                                                    std::int64_t tau) {
  const auto d = chebyshev(a, b);
  if (d <= tau) return 1;
  if (d >= 3 * tau) return 0;
  return std::nullopt;
}

struct MotifSite {
  int kind = 0;  // 0 = A, 1 = B
  std::size_t row = 0;
  GridCoord cell;
};

struct SynthDataset {
  Dataset data;
  std::vector<std::vector<float>> motifs;  // prototypes A, B
  std::vector<std::vector<MotifSite>> sites;  // per bag, in placement order
};

/// Two motif prototypes A and B over isotropic Gaussian background.
///
/// arrangement: every bag holds one A and one B; the label depends only on
/// their Chebyshev distance. cooccurrence: label 1 bags hold one A and one
/// B, label 0 bags two copies of a single motif (A or B with equal odds), so
/// both classes carry two motif instances; positions uniform.
/// Labels are exactly balanced and the output is a pure function of `cfg`.
inline SynthDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t F = cfg.feature_dim;
  const std::int64_t G = cfg.grid_extent;

  SynthDataset out;
  for (int m = 0; m < 2; ++m) {
    std::vector<double> v(F);
    double norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> proto(F);
    for (std::size_t j = 0; j < F; ++j) proto[j] = static_cast<float>(cfg.motif_scale * v[j] / norm);
    out.motifs.push_back(std::move(proto));
  }

  std::vector<std::size_t> labels(cfg.n_bags);
  for (std::size_t i = 0; i < cfg.n_bags; ++i) labels[i] = i % 2;
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_int_distribution<std::int64_t> cell(0, G - 1);
  std::uniform_int_distribution<std::size_t> count(cfg.min_instances, cfg.max_instances);
  auto random_cell = [&] { return GridCoord{cell(rng), cell(rng)}; };

  out.data.label_names = {"neg", "pos"};
  for (std::size_t b = 0; b < cfg.n_bags; ++b) {
    const std::size_t label = labels[b];
    const std::size_t n = count(rng);
    std::vector<GridCoord> motif_cells;
    std::vector<int> motif_kinds;  // 0 = A, 1 = B
    if (cfg.task == SynthTask::arrangement) {
      while (true) {
        const GridCoord a = random_cell();
        std::vector<GridCoord> candidates;
        for (std::int64_t x = 0; x < G; ++x)
          for (std::int64_t y = 0; y < G; ++y) {
            const GridCoord c{x, y};
            if (c == a) continue;
            const auto l = arrangement_label(a, c, cfg.tau);
            if (l && *l == label) candidates.push_back(c);
          }
        if (candidates.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        motif_cells = {a, candidates[pick(rng)]};
        motif_kinds = {0, 1};
        break;
      }
    } else {
      const GridCoord a = random_cell();
      GridCoord c = random_cell();
      while (c == a) c = random_cell();
      if (label == 1) {
        motif_cells = {a, c};
        motif_kinds = {0, 1};
      } else {
        const int kind = static_cast<int>(rng() % 2);
        motif_cells = {a, c};
        motif_kinds = {kind, kind};
      }
    }
    std::set<GridCoord> used(motif_cells.begin(), motif_cells.end());
    std::vector<GridCoord> coords = motif_cells;
    while (coords.size() < n) {
      const GridCoord c = random_cell();
      if (used.insert(c).second) coords.push_back(c);
    }
    // Random row order so motif rows carry no positional hint.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    Matrix<float> feats(n, F);
    std::vector<GridCoord> placed(n);
    std::vector<MotifSite> sites;
    for (std::size_t src = 0; src < n; ++src) {
      const std::size_t dst = perm[src];
      placed[dst] = coords[src];
      for (std::size_t j = 0; j < F; ++j) {
        double v = cfg.noise_std * normal(rng);
        if (src < motif_cells.size()) v += out.motifs[motif_kinds[src]][j];
        feats(dst, j) = static_cast<float>(v);
      }
      if (src < motif_cells.size()) sites.push_back({motif_kinds[src], dst, coords[src]});
    }
    char id[32];
    std::snprintf(id, sizeof(id), "bag_%05zu", b);
    out.data.bags.push_back(build_bag(std::move(feats), std::move(placed), id, label));
    out.data.labels.push_back(label);
    out.sites.push_back(std::move(sites));
  }
  return out;
}

}  // namespace romil
