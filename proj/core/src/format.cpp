// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/format.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace amlab {

std::string format_significant(double value, int digits) {
  std::array<char, 64> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.*g", digits, value);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

std::string format_roundtrip(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

}  // namespace amlab
