// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "romil/error.hpp"
#include "romil/matrix.hpp"

namespace romil {

struct GridCoord {
  std::int64_t x = 0;
  std::int64_t y = 0;

  auto operator<=>(const GridCoord&) const = default;
};

struct PixelCoord {
  std::int64_t x = 0;
  std::int64_t y = 0;
};

struct GridConfig {
  std::int64_t patch_size_px = 256;
};

/// Bag of patch feature vectors located on the slide grid.
///
/// Features are kept at the width the upstream extractor emits (32-bit);
/// models convert on entry.
struct PatchBag {
  Matrix<float> features;  // N×F
  std::vector<GridCoord> coords;
  std::vector<bool> mask;  // true = tissue patch
  std::optional<std::size_t> label;
  std::string bag_id;

  std::size_t size() const { return coords.size(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (bool m : mask) n += m ? 1 : 0;
    return n;
  }

  bool operator==(const PatchBag&) const = default;
};

/// floor(pixel / P) per axis.
inline std::vector<GridCoord> quantize_coords(const std::vector<PixelCoord>& pixels,
                                              const GridConfig& cfg) {
  if (cfg.patch_size_px < 1) {
    throw ConfigError("patch_size_px must be >= 1, got " + std::to_string(cfg.patch_size_px));
  }
  std::vector<GridCoord> out;
  out.reserve(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto& p = pixels[i];
    if (p.x < 0 || p.y < 0) {
      throw ArgumentError("negative pixel coordinate (" + std::to_string(p.x) + "," +
                          std::to_string(p.y) + ") at patch " + std::to_string(i));
    }
    // Non-negative operands: integer division is floor.
    out.push_back({p.x / cfg.patch_size_px, p.y / cfg.patch_size_px});
  }
  return out;
}

inline void validate_bag(const PatchBag& bag) {
  const std::size_t n = bag.coords.size();
  if (n == 0) throw ValidationError("empty bag '" + bag.bag_id + "'");
  if (bag.features.rows() != n || bag.mask.size() != n) {
    throw DimensionError("bag '" + bag.bag_id + "': " + std::to_string(bag.features.rows()) +
                         " feature rows, " + std::to_string(n) + " coordinates, " +
                         std::to_string(bag.mask.size()) + " mask entries");
  }
  std::set<GridCoord> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = bag.coords[i];
    if (c.x < 0 || c.y < 0) {
      throw ValidationError("bag '" + bag.bag_id + "': negative grid coordinate at patch " +
                            std::to_string(i));
    }
    if (!bag.mask[i]) continue;
    if (!seen.insert(c).second) {
      throw ValidationError("bag '" + bag.bag_id + "': duplicate grid cell (" +
                            std::to_string(c.x) + "," + std::to_string(c.y) + ") at patch " +
                            std::to_string(i));
    }
  }
}

inline PatchBag build_bag(Matrix<float> features, std::vector<GridCoord> coords,
                          std::string bag_id, std::optional<std::size_t> label = std::nullopt) {
  if (features.rows() == 0 && coords.empty()) {
    throw ValidationError("empty bag '" + bag_id + "'");
  }
  if (features.rows() != coords.size()) {
    throw DimensionError("bag '" + bag_id + "': " + std::to_string(features.rows()) +
                         " feature rows but " + std::to_string(coords.size()) + " coordinates");
  }
  PatchBag bag;
  bag.mask.assign(coords.size(), true);
  bag.features = std::move(features);
  bag.coords = std::move(coords);
  bag.label = label;
  bag.bag_id = std::move(bag_id);
  validate_bag(bag);
  return bag;
}

struct PaddedBatch {
  std::vector<Matrix<float>> features;  // each N_max×F
  std::vector<std::vector<GridCoord>> coords;
  std::vector<std::vector<bool>> mask;
  std::size_t max_instances = 0;
};

/// Pads every bag to the largest N with zero features, coordinate (0,0) and
/// mask=false.
inline PaddedBatch pad_bags(const std::vector<PatchBag>& bags) {
  if (bags.empty()) throw ArgumentError("pad_bags: no bags");
  PaddedBatch batch;
  const std::size_t f = bags.front().feature_dim();
  for (const auto& b : bags) {
    if (b.feature_dim() != f) {
      throw DimensionError("pad_bags: feature dim " + std::to_string(b.feature_dim()) +
                           " of bag '" + b.bag_id + "' differs from " + std::to_string(f));
    }
    batch.max_instances = std::max(batch.max_instances, b.size());
  }
  for (const auto& b : bags) {
    Matrix<float> feat(batch.max_instances, f);
    std::copy(b.features.values().begin(), b.features.values().end(), feat.data());
    auto coords = b.coords;
    coords.resize(batch.max_instances, GridCoord{0, 0});
    auto mask = b.mask;
    mask.resize(batch.max_instances, false);
    batch.features.push_back(std::move(feat));
    batch.coords.push_back(std::move(coords));
    batch.mask.push_back(std::move(mask));
  }
  return batch;
}

}  // namespace romil
