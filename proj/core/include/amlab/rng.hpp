// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace amlab {

/// xoshiro256++ seeded through splitmix64.
///
/// Every derived quantity (uniform doubles, bounded integers, Gaussians,
/// shuffles) is computed here rather than through <random> distributions,
/// whose algorithms are implementation-defined. The stream for a given seed
/// is therefore identical on every platform and standard library.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, bound). Unbiased (Lemire's multiply-and-reject).
  std::uint64_t uniform_index(std::uint64_t bound);

  /// One draw from N(mean, stddev^2) via the Box-Muller cosine branch.
  /// The sine branch is discarded so each call consumes exactly two words.
  /// Throws DomainError if stddev < 0.
  double gaussian(double mean, double stddev);

  /// Independent stream derived from this generator's seed and a stream id.
  /// Does not advance this generator.
  Rng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
};

}  // namespace amlab
