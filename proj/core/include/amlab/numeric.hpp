// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

namespace amlab {

/// log(sum(exp(v))) evaluated after subtracting max(v).
/// Throws DomainError on an empty or non-finite input.
double stable_logsumexp(std::span<const double> values);

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace amlab
