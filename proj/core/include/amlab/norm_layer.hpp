// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "amlab/head.hpp"

namespace amlab {

inline constexpr double kDefaultNormEps = 1e-12;

/// Forward state of y = x / |x|, kept for the backward pass.
struct NormCache {
  std::vector<double> input;
  double norm = 0.0;
  std::vector<double> output;
};

/// Throws DegenerateVectorError when |v| <= eps.
NormCache l2_normalize(std::span<const double> v, double eps = kDefaultNormEps);

/// Vector-Jacobian product of the normalization: (I - y y^T) upstream / |x|.
std::vector<double> l2_normalize_backward(const NormCache& cache,
                                          std::span<const double> upstream);

struct GradNormPoint {
  double feature_norm = 0.0;
  double grad_normalized = 0.0;  ///< |dL/df| with feature normalization at scale s
  double grad_plain = 0.0;       ///< |dL/df| with logits W_j . f
};

struct GradNormCurve {
  std::vector<GradNormPoint> points;

  /// CSV `feature_norm,grad_fn,grad_plain`, 6 significant digits.
  void write_csv(std::ostream& out) const;

  /// Feature norm at which the two columns first cross, interpolated linearly
  /// in log-log space between adjacent samples. Empty when they never cross.
  std::optional<double> crossing() const;
};

/// Feature-gradient norm versus feature norm for softmax with and without
/// feature normalization, evaluated at f = |f| * direction for a sample of
/// class `target`. Both columns use the head with unit-normalized rows, so at
/// |f| = s the two losses see identical logits.
///
/// Throws DomainError on an empty norm list, a non-unit direction or a
/// non-positive norm.
GradNormCurve gradnorm_curve(const ClassifierHead& head, std::span<const double> direction,
                             std::span<const double> norms, double s, int target);

/// Normalized mean of the target class weight and its nearest other class
/// weight (by cosine).
std::vector<double> default_gradnorm_direction(const ClassifierHead& head, int target);

/// `count` norms spaced uniformly in log space over [lo, hi].
std::vector<double> log_spaced(double lo, double hi, std::size_t count);

}  // namespace amlab
