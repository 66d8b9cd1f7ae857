// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "amlab/head.hpp"
#include "amlab/margin_math.hpp"
#include "amlab/matrix.hpp"

namespace amlab {

enum class LossVariant { softmax, normface, a_softmax, am_softmax };

std::string_view to_string(LossVariant variant);
/// Throws DomainError on an unknown name.
LossVariant parse_loss_variant(std::string_view name);

/// Every hyperparameter of the classification losses.
///
/// Scale per variant:
///   softmax     raw logits W_j . f, no normalization, s unused
///   normface    s * cos(theta_j)
///   am_softmax  s * (cos(theta_y) - m) for the target, s * cos(theta_j) otherwise;
///               with feature_norm off the scale is |f_i| instead of s
///   a_softmax   |f_i| * psi(theta_y) for the target, |f_i| * cos(theta_j) otherwise
struct LossConfig {
  LossVariant variant = LossVariant::am_softmax;
  double s = 30.0;
  double m_add = 0.35;
  int m_mult = 4;
  LambdaSchedule lambda_schedule{};
  bool feature_norm = true;
  bool weight_norm = true;

  static LossConfig softmax();
  static LossConfig normface(double s = 30.0);
  static LossConfig am_softmax(double s = 30.0, double m = 0.35, bool feature_norm = true);
  static LossConfig a_softmax(int m = 4, LambdaSchedule schedule = {});

  /// Throws DomainError if the flag combination contradicts the variant.
  void validate() const;
};

struct LossOutput {
  double loss = 0.0;           ///< mean over the batch
  Matrix grad_features;        ///< n x d, dL/df_i
  Matrix grad_weights;         ///< c x d, dL/dW_j
  std::vector<double> target_logits;
  Matrix probabilities;        ///< n x c
};

/// Mean loss over the batch with exact analytic gradients, including the
/// backward pass through feature and weight normalization when enabled.
/// `iteration` drives the lambda schedule for a_softmax.
///
/// Throws DomainError on a bad label or non-finite input, DimensionError on a
/// shape mismatch and DegenerateVectorError on a zero feature or weight row
/// that must be normalized.
LossOutput loss_forward_backward(const Batch& batch, const ClassifierHead& head,
                                 const LossConfig& config, std::int64_t iteration = 0);

/// Forward-only per-sample losses, -log p(y_i | f_i), unreduced.
std::vector<double> per_sample_losses(const Batch& batch, const ClassifierHead& head,
                                      const LossConfig& config, std::int64_t iteration = 0);

/// Class with the highest cosine to each feature row; ties go to the lower
/// index. Throws DegenerateVectorError on a zero feature.
std::vector<int> predict(const Matrix& features, const ClassifierHead& head);

struct GradCheckOptions {
  double step = 1e-5;
  /// Added to every analytic gradient entry before comparison; non-zero
  /// values exist only to exercise the failure path.
  double corrupt_analytic = 0.0;
};

struct GradCheckResult {
  double max_rel_error_features = 0.0;
  double max_rel_error_weights = 0.0;
  double max_rel_error() const;
};

/// Compares analytic gradients with central finite differences on a seeded
/// random instance of c classes, d dims and n samples. Relative error uses
/// the denominator max(|analytic|, |numeric|, 1e-8).
///
/// a_softmax instances are redrawn until every target angle is at least 1e-3
/// away from a branch boundary k * pi / m.
GradCheckResult grad_check(const LossConfig& config, std::size_t c, std::size_t d, std::size_t n,
                           std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace amlab
