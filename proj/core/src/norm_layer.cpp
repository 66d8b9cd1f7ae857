// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/norm_layer.hpp"

#include <cmath>
#include <ostream>

#include "amlab/error.hpp"
#include "amlab/format.hpp"
#include "amlab/losses.hpp"

namespace amlab {

void ClassifierHead::normalize_rows() {
  for (std::size_t j = 0; j < weights.rows(); ++j) {
    auto row = weights.row(j);
    const NormCache cache = l2_normalize(row);
    std::copy(cache.output.begin(), cache.output.end(), row.begin());
  }
}

NormCache l2_normalize(std::span<const double> v, double eps) {
  const double norm = norm2(v);
  if (!(norm > eps)) {
    throw DegenerateVectorError("l2_normalize: norm " + format_significant(norm) +
                                " is not above eps " + format_significant(eps));
  }
  NormCache cache{std::vector<double>(v.begin(), v.end()), norm,
                  std::vector<double>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) cache.output[i] = v[i] / norm;
  return cache;
}

std::vector<double> l2_normalize_backward(const NormCache& cache,
                                          std::span<const double> upstream) {
  if (upstream.size() != cache.output.size()) {
    throw DimensionError("l2_normalize_backward: upstream length " +
                         std::to_string(upstream.size()) + " vs " +
                         std::to_string(cache.output.size()));
  }
  const double radial = dot(cache.output, upstream);
  std::vector<double> grad(upstream.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = (upstream[i] - radial * cache.output[i]) / cache.norm;
  }
  return grad;
}

void GradNormCurve::write_csv(std::ostream& out) const {
  out << "feature_norm,grad_fn,grad_plain\n";
  for (const auto& p : points) {
    out << format_significant(p.feature_norm) << ',' << format_significant(p.grad_normalized)
        << ',' << format_significant(p.grad_plain) << '\n';
  }
}

std::optional<double> GradNormCurve::crossing() const {
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& a = points[i - 1];
    const auto& b = points[i];
    const double da = std::log(a.grad_normalized) - std::log(a.grad_plain);
    const double db = std::log(b.grad_normalized) - std::log(b.grad_plain);
    if (da == 0.0) return a.feature_norm;
    if ((da > 0.0) != (db > 0.0) || db == 0.0) {
      const double t = da / (da - db);
      const double la = std::log(a.feature_norm);
      const double lb = std::log(b.feature_norm);
      return std::exp(la + t * (lb - la));
    }
  }
  return std::nullopt;
}

GradNormCurve gradnorm_curve(const ClassifierHead& head, std::span<const double> direction,
                             std::span<const double> norms, double s, int target) {
  if (norms.empty()) throw DomainError("gradnorm_curve: empty norm list");
  if (direction.size() != head.embed_dim()) {
    throw DimensionError("gradnorm_curve: direction length does not match head");
  }
  if (std::abs(norm2(direction) - 1.0) > 1e-9) {
    throw DomainError("gradnorm_curve: direction is not a unit vector");
  }
  if (target < 0 || static_cast<std::size_t>(target) >= head.class_count()) {
    throw DomainError("gradnorm_curve: target class out of range");
  }

  ClassifierHead unit_head = head;
  unit_head.normalize_rows();
  const LossConfig normalized = LossConfig::normface(s);
  const LossConfig plain = LossConfig::softmax();

  GradNormCurve curve;
  for (double r : norms) {
    if (!(r > 0.0)) throw DomainError("gradnorm_curve: feature norms must be positive");
    Batch batch{Matrix(1, direction.size()), {target}};
    for (std::size_t k = 0; k < direction.size(); ++k) batch.features(0, k) = r * direction[k];
    const double g_fn = norm2(loss_forward_backward(batch, unit_head, normalized).grad_features.row(0));
    const double g_plain = norm2(loss_forward_backward(batch, unit_head, plain).grad_features.row(0));
    curve.points.push_back({r, g_fn, g_plain});
  }
  return curve;
}

std::vector<double> default_gradnorm_direction(const ClassifierHead& head, int target) {
  if (head.class_count() < 2) throw DomainError("gradnorm direction: need at least 2 classes");
  if (target < 0 || static_cast<std::size_t>(target) >= head.class_count()) {
    throw DomainError("gradnorm direction: target class out of range");
  }
  const auto t = static_cast<std::size_t>(target);
  const NormCache wt = l2_normalize(head.weights.row(t));
  double best = -2.0;
  std::vector<double> nearest_unit;
  for (std::size_t j = 0; j < head.class_count(); ++j) {
    if (j == t) continue;
    NormCache wj = l2_normalize(head.weights.row(j));
    const double cosine = dot(wt.output, wj.output);
    if (cosine > best) {
      best = cosine;
      nearest_unit = std::move(wj.output);
    }
  }
  std::vector<double> mean(wt.output.size());
  for (std::size_t k = 0; k < mean.size(); ++k) mean[k] = 0.5 * (wt.output[k] + nearest_unit[k]);
  return l2_normalize(mean).output;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) {
    throw DomainError("log_spaced: need 0 < lo < hi and count >= 2");
  }
  std::vector<double> out(count);
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

}  // namespace amlab
