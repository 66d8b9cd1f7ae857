// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace amlab {

/// printf("%.{digits}g"), the fixed-precision format of every numeric CSV.
std::string format_significant(double value, int digits = 6);

/// Shortest decimal string that parses back to the same double.
std::string format_roundtrip(double value);

}  // namespace amlab
