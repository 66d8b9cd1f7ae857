// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace amlab {

/// Which target-logit transform a curve or loss uses.
enum class PsiVariant { softmax, a_softmax, am_softmax };

/// Parameters of one target-logit transform.
///
/// am_softmax reads only m_add; a_softmax reads m_mult and lambda; softmax
/// reads nothing.
struct PsiParams {
  PsiVariant variant = PsiVariant::softmax;
  int m_mult = 4;
  double m_add = 0.35;
  double lambda = 0.0;

  static PsiParams softmax() { return {}; }
  static PsiParams a_softmax(int m, double lambda) {
    return {PsiVariant::a_softmax, m, 0.0, lambda};
  }
  static PsiParams am_softmax(double m) { return {PsiVariant::am_softmax, 1, m, 0.0}; }

  /// Column label used in curve exports, e.g. "a_softmax_m4_l5".
  std::string name() const;

  /// psi evaluated at angle theta (radians).
  double evaluate(double theta) const;
};

/// Inverse-polynomial decay of the A-Softmax blending weight lambda:
///   lambda(t) = max(lambda_min, lambda_base * (1 + gamma * t)^(-power))
struct LambdaSchedule {
  double lambda_base = 1000.0;
  double lambda_min = 5.0;
  double gamma = 0.12;
  double power = 1.0;

  /// A schedule pinned at one value for every iteration.
  static LambdaSchedule constant(double lambda) { return {lambda, lambda, 1.0, 1.0}; }
};

double lambda_at(const LambdaSchedule& schedule, std::int64_t iteration);

/// Piecewise A-Softmax transform
///   ((-1)^k cos(m theta) - 2k + lambda cos theta) / (1 + lambda),
/// with k = floor(m theta / pi) clamped to [0, m-1].
/// Throws DomainError when theta is outside [0, pi] or m < 1 or lambda < 0.
double psi_a_softmax(double theta, int m_mult, double lambda);

/// d psi_a_softmax / d theta on the branch selected by the same k rule.
double psi_a_softmax_dtheta(double theta, int m_mult, double lambda);

/// Additive-margin transform on the cosine: cos_theta - m_add.
/// Inputs within 1e-9 outside [-1, 1] are clamped; anything further throws.
double psi_am(double cos_theta, double m_add);

/// Angular margin equivalent to the cosine margin m_add at operating angle
/// theta: arccos(cos theta - m) - theta. Throws DomainError when
/// cos theta - m < -1.
double cosine_to_angular_margin(double theta, double m_add);

using Vec2 = std::array<double, 2>;

/// Two-class decision geometry on the unit circle.
struct BoundaryGeometry {
  Vec2 p0{};  ///< plain softmax boundary, w1.p0 == w2.p0
  Vec2 p1{};  ///< class-1 boundary, w1.p1 - m == w2.p1
  Vec2 p2{};  ///< class-2 boundary, w2.p2 - m == w1.p2
  double margin_width_rad = 0.0;
};

/// Unit vector on the short arc between w1 and w2 where both scores tie.
/// Both inputs must be unit vectors; parallel or antiparallel pairs throw.
Vec2 softmax_boundary(const Vec2& w1, const Vec2& w2);

/// Boundaries of the additive-margin region between two class weights, found
/// by bisection along the arc to 1e-12 radians.
/// Throws DomainError when the pair is too close for the margin to fit.
BoundaryGeometry am_boundary(const Vec2& w1, const Vec2& w2, double m_add);

/// Sampled psi curves over a uniform grid on [0, 180] degrees.
struct PsiCurveTable {
  std::vector<std::string> names;
  std::vector<double> theta_deg;
  std::vector<std::vector<double>> columns;  ///< one per config, same length as theta_deg

  /// CSV: header `theta_deg,<name>...`, 6 significant digits, LF endings.
  void write_csv(std::ostream& out) const;
};

/// Throws DomainError when grid_points < 2.
PsiCurveTable export_psi_curve(const std::vector<PsiParams>& configs, std::size_t grid_points);

/// The softmax / A-Softmax (m=2 l=0, m=4 l=5, m=4 l=0) / AM-Softmax m=0.35
/// roster compared in the classic psi-curve plot.
std::vector<PsiParams> default_psi_roster();

}  // namespace amlab
