// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/margin_math.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "amlab/error.hpp"
#include "amlab/format.hpp"
#include "amlab/numeric.hpp"

namespace amlab {
namespace {

constexpr double kCosineSlack = 1e-9;
constexpr double kUnitTolerance = 1e-9;
constexpr double kBisectionTolerance = 1e-12;

void check_a_softmax_args(double theta, int m_mult, double lambda) {
  if (!(theta >= 0.0 && theta <= kPi)) {
    throw DomainError("psi_a_softmax: theta " + std::to_string(theta) + " outside [0, pi]");
  }
  if (m_mult < 1) throw DomainError("psi_a_softmax: m must be >= 1");
  if (!(lambda >= 0.0)) throw DomainError("psi_a_softmax: lambda must be >= 0");
}

int branch_index(double theta, int m_mult) {
  const int k = static_cast<int>(std::floor(m_mult * theta / kPi));
  return std::clamp(k, 0, m_mult - 1);
}

void check_unit(const Vec2& w, const char* name) {
  const double n = std::hypot(w[0], w[1]);
  if (std::abs(n - 1.0) > kUnitTolerance) {
    throw DomainError(std::string("boundary: ") + name + " is not a unit vector");
  }
}

// Rotation of w by `angle` radians (counter-clockwise).
Vec2 rotate(const Vec2& w, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * w[0] - s * w[1], s * w[0] + c * w[1]};
}

struct ArcFrame {
  double separation;  // angle between w1 and w2, in (0, pi)
  double orientation;  // +1 when w2 is counter-clockwise of w1
};

ArcFrame arc_between(const Vec2& w1, const Vec2& w2) {
  check_unit(w1, "w1");
  check_unit(w2, "w2");
  const double cross = w1[0] * w2[1] - w1[1] * w2[0];
  const double cosine = w1[0] * w2[0] + w1[1] * w2[1];
  if (std::abs(cross) < 1e-12) {
    throw DomainError("boundary: w1 and w2 are parallel or antiparallel");
  }
  return {std::atan2(std::abs(cross), cosine), cross > 0.0 ? 1.0 : -1.0};
}

}  // namespace

std::string PsiParams::name() const {
  switch (variant) {
    case PsiVariant::softmax:
      return "softmax";
    case PsiVariant::a_softmax:
      return "a_softmax_m" + std::to_string(m_mult) + "_l" + format_significant(lambda);
    case PsiVariant::am_softmax:
      return "am_softmax_m" + format_significant(m_add);
  }
  return "unknown";
}

double PsiParams::evaluate(double theta) const {
  switch (variant) {
    case PsiVariant::softmax:
      return std::cos(theta);
    case PsiVariant::a_softmax:
      return psi_a_softmax(theta, m_mult, lambda);
    case PsiVariant::am_softmax:
      return psi_am(std::cos(theta), m_add);
  }
  return std::cos(theta);
}

double lambda_at(const LambdaSchedule& schedule, std::int64_t iteration) {
  if (iteration < 0) throw DomainError("lambda_at: negative iteration");
  const double decayed =
      schedule.lambda_base *
      std::pow(1.0 + schedule.gamma * static_cast<double>(iteration), -schedule.power);
  return std::max(schedule.lambda_min, decayed);
}

double psi_a_softmax(double theta, int m_mult, double lambda) {
  check_a_softmax_args(theta, m_mult, lambda);
  const int k = branch_index(theta, m_mult);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return (sign * std::cos(m_mult * theta) - 2.0 * k + lambda * std::cos(theta)) / (1.0 + lambda);
}

double psi_a_softmax_dtheta(double theta, int m_mult, double lambda) {
  check_a_softmax_args(theta, m_mult, lambda);
  const int k = branch_index(theta, m_mult);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return (-sign * m_mult * std::sin(m_mult * theta) - lambda * std::sin(theta)) / (1.0 + lambda);
}

double psi_am(double cos_theta, double m_add) {
  if (!(cos_theta >= -1.0 - kCosineSlack && cos_theta <= 1.0 + kCosineSlack)) {
    throw DomainError("psi_am: cosine " + std::to_string(cos_theta) + " outside [-1, 1]");
  }
  return std::clamp(cos_theta, -1.0, 1.0) - m_add;
}

double cosine_to_angular_margin(double theta, double m_add) {
  if (!(theta >= 0.0 && theta <= kPi)) {
    throw DomainError("cosine_to_angular_margin: theta outside [0, pi]");
  }
  const double shifted = std::cos(theta) - m_add;
  if (shifted < -1.0) {
    throw DomainError("cosine_to_angular_margin: margin pushes past the antipode");
  }
  return std::acos(std::min(shifted, 1.0)) - theta;
}

Vec2 softmax_boundary(const Vec2& w1, const Vec2& w2) {
  const ArcFrame arc = arc_between(w1, w2);
  return rotate(w1, arc.orientation * arc.separation / 2.0);
}

BoundaryGeometry am_boundary(const Vec2& w1, const Vec2& w2, double m_add) {
  if (!(m_add >= 0.0)) throw DomainError("am_boundary: margin must be non-negative");
  const ArcFrame arc = arc_between(w1, w2);
  const double phi = arc.separation;

  // Along the arc from w1, w1.P - w2.P - m = cos(a) - cos(phi - a) - m is
  // strictly decreasing and equals -m at the midpoint.
  auto excess = [&](double a) { return std::cos(a) - std::cos(phi - a) - m_add; };
  if (excess(0.0) < 0.0) {
    throw DomainError("am_boundary: margin " + std::to_string(m_add) +
                      " exceeds what the class separation allows");
  }
  double lo = 0.0;
  double hi = phi / 2.0;
  while (hi - lo > kBisectionTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (excess(mid) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double a1 = 0.5 * (lo + hi);

  BoundaryGeometry g;
  g.p0 = rotate(w1, arc.orientation * phi / 2.0);
  g.p1 = rotate(w1, arc.orientation * a1);
  g.p2 = rotate(w1, arc.orientation * (phi - a1));
  g.margin_width_rad = phi - 2.0 * a1;
  return g;
}

void PsiCurveTable::write_csv(std::ostream& out) const {
  out << "theta_deg";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < theta_deg.size(); ++i) {
    out << format_significant(theta_deg[i]);
    for (const auto& col : columns) out << ',' << format_significant(col[i]);
    out << '\n';
  }
}

PsiCurveTable export_psi_curve(const std::vector<PsiParams>& configs, std::size_t grid_points) {
  if (grid_points < 2) throw DomainError("export_psi_curve: need at least 2 grid points");
  PsiCurveTable table;
  table.theta_deg.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    table.theta_deg[i] = 180.0 * static_cast<double>(i) / static_cast<double>(grid_points - 1);
  }
  for (const auto& config : configs) {
    table.names.push_back(config.name());
    std::vector<double> col(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i) {
      // The last grid point is exactly 180 degrees; pin it to pi.
      const double theta = (i + 1 == grid_points) ? kPi : deg_to_rad(table.theta_deg[i]);
      col[i] = config.evaluate(theta);
    }
    table.columns.push_back(std::move(col));
  }
  return table;
}

std::vector<PsiParams> default_psi_roster() {
  return {PsiParams::softmax(), PsiParams::a_softmax(2, 0.0), PsiParams::a_softmax(4, 5.0),
          PsiParams::a_softmax(4, 0.0), PsiParams::am_softmax(0.35)};
}

}  // namespace amlab
