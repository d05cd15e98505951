// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "romil/grid.hpp"

namespace romil {

/// Labelled bags held in memory. `labels[i]` indexes `label_names`.
struct Dataset {
  std::vector<PatchBag> bags;
  std::vector<std::size_t> labels;
  std::vector<std::string> label_names;

  std::size_t size() const { return bags.size(); }
  std::size_t n_classes() const { return label_names.size(); }
};

}  // namespace romil
