// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "amlab/error.hpp"

namespace amlab {

double stable_logsumexp(std::span<const double> values) {
  if (values.empty()) throw DomainError("stable_logsumexp of an empty array");
  double max = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("stable_logsumexp of a non-finite value");
    max = std::max(max, v);
  }
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  return max + std::log(sum);
}

}  // namespace amlab
