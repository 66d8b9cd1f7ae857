// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "amlab/matrix.hpp"

namespace amlab {

/// Last-layer class weights, one row per class (row j is W_j).
struct ClassifierHead {
  Matrix weights;  ///< c x d

  std::size_t class_count() const noexcept { return weights.rows(); }
  std::size_t embed_dim() const noexcept { return weights.cols(); }

  /// Rescales every row to unit norm. Throws DegenerateVectorError on a zero row.
  void normalize_rows();
};

/// n feature rows with their integer labels.
struct Batch {
  Matrix features;  ///< n x d
  std::vector<int> labels;

  std::size_t size() const noexcept { return features.rows(); }
};

}  // namespace amlab
