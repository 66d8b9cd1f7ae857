// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/losses.hpp"

#include <algorithm>
#include <cmath>

#include "amlab/error.hpp"
#include "amlab/norm_layer.hpp"
#include "amlab/numeric.hpp"
#include "amlab/rng.hpp"

namespace amlab {
namespace {

constexpr double kArccosClamp = 1e-7;
constexpr double kBranchExclusion = 1e-3;
constexpr double kRelErrorFloor = 1e-8;

void check_inputs(const Batch& batch, const ClassifierHead& head) {
  if (batch.size() == 0) throw DomainError("loss: empty batch");
  if (batch.labels.size() != batch.size()) {
    throw DimensionError("loss: " + std::to_string(batch.labels.size()) + " labels for " +
                         std::to_string(batch.size()) + " features");
  }
  if (batch.features.cols() != head.embed_dim()) {
    throw DimensionError("loss: features " + batch.features.shape_string() +
                         " do not match head " + head.weights.shape_string());
  }
  const int c = static_cast<int>(head.class_count());
  for (int y : batch.labels) {
    if (y < 0 || y >= c) {
      throw DomainError("loss: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(c) + ")");
    }
  }
  if (!batch.features.all_finite()) throw DomainError("loss: non-finite feature");
  if (!head.weights.all_finite()) throw DomainError("loss: non-finite weight");
}

// Target transform psi(cos) and its derivative with respect to cos.
struct TargetTransform {
  double value;
  double derivative;
};

TargetTransform target_transform(const LossConfig& config, double cosine, double lambda) {
  switch (config.variant) {
    case LossVariant::softmax:
    case LossVariant::normface:
      return {cosine, 1.0};
    case LossVariant::am_softmax:
      return {psi_am(cosine, config.m_add), 1.0};
    case LossVariant::a_softmax: {
      const double c = std::clamp(cosine, -1.0 + kArccosClamp, 1.0 - kArccosClamp);
      const double theta = std::acos(c);
      const double dtheta_dcos = -1.0 / std::sqrt(1.0 - c * c);
      return {psi_a_softmax(theta, config.m_mult, lambda),
              psi_a_softmax_dtheta(theta, config.m_mult, lambda) * dtheta_dcos};
    }
  }
  return {cosine, 1.0};
}

// -log softmax(z)[y] and the probabilities. When the target holds the largest
// logit the loss is evaluated as log1p(sum_{j != y} exp(z_j - z_y)), which
// keeps full relative precision for nearly-saturated samples.
double nll_and_probabilities(std::span<const double> z, int y, std::span<double> prob) {
  const double lse = stable_logsumexp(z);
  for (std::size_t j = 0; j < z.size(); ++j) prob[j] = std::exp(z[j] - lse);
  const double zy = z[static_cast<std::size_t>(y)];
  if (zy >= *std::max_element(z.begin(), z.end())) {
    double tail = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (static_cast<int>(j) != y) tail += std::exp(z[j] - zy);
    }
    return std::log1p(tail);
  }
  return lse - zy;
}

struct Workspace {
  Matrix weights_used;              // normalized rows when weight_norm is active
  std::vector<double> weight_norms;  // |W_j|, only when weight_norm is active
};

Workspace prepare_weights(const ClassifierHead& head, const LossConfig& config) {
  Workspace ws{head.weights, {}};
  if (config.variant != LossVariant::softmax && config.weight_norm) {
    ws.weight_norms.resize(head.class_count());
    for (std::size_t j = 0; j < head.class_count(); ++j) {
      NormCache cache = l2_normalize(head.weights.row(j));
      ws.weight_norms[j] = cache.norm;
      std::copy(cache.output.begin(), cache.output.end(), ws.weights_used.row(j).begin());
    }
  }
  return ws;
}

// Shared forward (and optionally backward) kernel.
LossOutput run(const Batch& batch, const ClassifierHead& head, const LossConfig& config,
               std::int64_t iteration, bool backward, std::vector<double>* per_sample) {
  config.validate();
  check_inputs(batch, head);

  const std::size_t n = batch.size();
  const std::size_t c = head.class_count();
  const std::size_t d = head.embed_dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double lambda =
      config.variant == LossVariant::a_softmax ? lambda_at(config.lambda_schedule, iteration) : 0.0;

  const Workspace ws = prepare_weights(head, config);

  LossOutput out;
  out.probabilities = Matrix(n, c);
  out.target_logits.resize(n);
  if (backward) {
    out.grad_features = Matrix(n, d);
    out.grad_weights = Matrix(c, d);
  }
  if (per_sample) per_sample->assign(n, 0.0);

  // Gradient with respect to the (possibly normalized) weight rows.
  Matrix grad_used(backward ? c : 0, backward ? d : 0);
  std::vector<double> z(c);
  std::vector<double> cosines(c);
  std::vector<double> dz(c);
  std::vector<double> grad_unit(d);
  double total = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto f = batch.features.row(i);
    const int y = batch.labels[i];
    const auto yi = static_cast<std::size_t>(y);

    if (config.variant == LossVariant::softmax) {
      for (std::size_t j = 0; j < c; ++j) z[j] = dot(ws.weights_used.row(j), f);
      out.target_logits[i] = z[yi];
      const double li = nll_and_probabilities(z, y, out.probabilities.row(i));
      total += li;
      if (per_sample) (*per_sample)[i] = li;
      if (!backward) continue;

      const auto p = out.probabilities.row(i);
      double others = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dz[j] = p[j] * inv_n;
        if (j != yi) others += p[j];
      }
      dz[yi] = -others * inv_n;
      auto gf = out.grad_features.row(i);
      for (std::size_t j = 0; j < c; ++j) {
        axpy(dz[j], ws.weights_used.row(j), gf);
        axpy(dz[j], f, out.grad_weights.row(j));
      }
      continue;
    }

    const NormCache fn = l2_normalize(f);
    const std::span<const double> unit = fn.output;
    const bool fixed_scale = config.feature_norm;
    const double scale = fixed_scale ? config.s : fn.norm;

    for (std::size_t j = 0; j < c; ++j) cosines[j] = dot(ws.weights_used.row(j), unit);
    const TargetTransform psi = target_transform(config, cosines[yi], lambda);
    for (std::size_t j = 0; j < c; ++j) z[j] = scale * cosines[j];
    z[yi] = scale * psi.value;
    out.target_logits[i] = z[yi];

    const double li = nll_and_probabilities(z, y, out.probabilities.row(i));
    total += li;
    if (per_sample) (*per_sample)[i] = li;
    if (!backward) continue;

    const auto p = out.probabilities.row(i);
    double others = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dz[j] = p[j] * inv_n;
      if (j != yi) others += p[j];
    }
    dz[yi] = -others * inv_n;

    // dL/dscale, used only when the scale is |f_i|.
    double dscale = dz[yi] * psi.value;
    std::fill(grad_unit.begin(), grad_unit.end(), 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      const double dcos = (j == yi) ? dz[j] * scale * psi.derivative : dz[j] * scale;
      if (j != yi) dscale += dz[j] * cosines[j];
      axpy(dcos, ws.weights_used.row(j), grad_unit);
      axpy(dcos, unit, grad_used.row(j));
    }

    std::vector<double> gf = l2_normalize_backward(fn, grad_unit);
    if (!fixed_scale) axpy(dscale, unit, gf);
    std::copy(gf.begin(), gf.end(), out.grad_features.row(i).begin());
  }

  if (backward && config.variant != LossVariant::softmax) {
    for (std::size_t j = 0; j < c; ++j) {
      if (config.weight_norm) {
        NormCache wn{{}, ws.weight_norms[j],
                     std::vector<double>(ws.weights_used.row(j).begin(),
                                         ws.weights_used.row(j).end())};
        const auto gw = l2_normalize_backward(wn, grad_used.row(j));
        std::copy(gw.begin(), gw.end(), out.grad_weights.row(j).begin());
      } else {
        std::copy(grad_used.row(j).begin(), grad_used.row(j).end(),
                  out.grad_weights.row(j).begin());
      }
    }
  }

  out.loss = total * inv_n;
  if (!std::isfinite(out.loss)) throw DomainError("loss: non-finite result");
  return out;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kRelErrorFloor});
}

bool near_branch_boundary(const Batch& batch, const ClassifierHead& head, int m_mult) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto w = head.weights.row(static_cast<std::size_t>(batch.labels[i]));
    const auto f = batch.features.row(i);
    const double cosine = std::clamp(dot(w, f) / (norm2(w) * norm2(f)), -1.0, 1.0);
    const double theta = std::acos(cosine);
    for (int k = 0; k <= m_mult; ++k) {
      if (std::abs(theta - k * kPi / m_mult) < kBranchExclusion) return true;
    }
  }
  return false;
}

}  // namespace

std::string_view to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::softmax:
      return "softmax";
    case LossVariant::normface:
      return "normface";
    case LossVariant::a_softmax:
      return "a_softmax";
    case LossVariant::am_softmax:
      return "am_softmax";
  }
  return "unknown";
}

LossVariant parse_loss_variant(std::string_view name) {
  for (auto v : {LossVariant::softmax, LossVariant::normface, LossVariant::a_softmax,
                 LossVariant::am_softmax}) {
    if (to_string(v) == name) return v;
  }
  throw DomainError("unknown loss variant '" + std::string(name) + "'");
}

LossConfig LossConfig::softmax() {
  LossConfig c;
  c.variant = LossVariant::softmax;
  c.m_add = 0.0;
  c.feature_norm = false;
  c.weight_norm = false;
  return c;
}

LossConfig LossConfig::normface(double s) {
  LossConfig c;
  c.variant = LossVariant::normface;
  c.s = s;
  c.m_add = 0.0;
  return c;
}

LossConfig LossConfig::am_softmax(double s, double m, bool feature_norm) {
  LossConfig c;
  c.variant = LossVariant::am_softmax;
  c.s = s;
  c.m_add = m;
  c.feature_norm = feature_norm;
  return c;
}

LossConfig LossConfig::a_softmax(int m, LambdaSchedule schedule) {
  LossConfig c;
  c.variant = LossVariant::a_softmax;
  c.m_mult = m;
  c.m_add = 0.0;
  c.lambda_schedule = schedule;
  c.feature_norm = false;
  return c;
}

void LossConfig::validate() const {
  auto fail = [this](const std::string& what) {
    throw DomainError(std::string(to_string(variant)) + " config: " + what);
  };
  if (variant != LossVariant::softmax && !(s > 0.0)) fail("s must be positive");
  switch (variant) {
    case LossVariant::softmax:
      if (feature_norm || weight_norm) fail("plain softmax takes no normalization");
      break;
    case LossVariant::normface:
      if (!feature_norm || !weight_norm) fail("requires feature and weight normalization");
      if (m_add != 0.0) fail("margin must be 0");
      break;
    case LossVariant::am_softmax:
      if (!weight_norm) fail("requires weight normalization");
      if (!(m_add >= 0.0 && m_add < 1.0)) fail("m must lie in [0, 1)");
      break;
    case LossVariant::a_softmax:
      if (!weight_norm || feature_norm) fail("requires weight normalization only");
      if (m_mult < 1) fail("m must be >= 1");
      if (!(lambda_schedule.lambda_min >= 0.0) || !(lambda_schedule.gamma > 0.0) ||
          !(lambda_schedule.power > 0.0)) {
        fail("invalid lambda schedule");
      }
      break;
  }
}

LossOutput loss_forward_backward(const Batch& batch, const ClassifierHead& head,
                                 const LossConfig& config, std::int64_t iteration) {
  return run(batch, head, config, iteration, true, nullptr);
}

std::vector<double> per_sample_losses(const Batch& batch, const ClassifierHead& head,
                                      const LossConfig& config, std::int64_t iteration) {
  std::vector<double> losses;
  run(batch, head, config, iteration, false, &losses);
  return losses;
}

std::vector<int> predict(const Matrix& features, const ClassifierHead& head) {
  if (features.cols() != head.embed_dim()) {
    throw DimensionError("predict: features " + features.shape_string() +
                         " do not match head " + head.weights.shape_string());
  }
  std::vector<double> inv_weight_norm(head.class_count());
  for (std::size_t j = 0; j < head.class_count(); ++j) {
    inv_weight_norm[j] = 1.0 / l2_normalize(head.weights.row(j)).norm;
  }
  std::vector<int> labels(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const double inv_norm = 1.0 / l2_normalize(features.row(i)).norm;
    int best = 0;
    double best_cos = -2.0;
    for (std::size_t j = 0; j < head.class_count(); ++j) {
      const double cosine = dot(head.weights.row(j), features.row(i)) * inv_weight_norm[j] * inv_norm;
      if (cosine > best_cos) {
        best_cos = cosine;
        best = static_cast<int>(j);
      }
    }
    labels[i] = best;
  }
  return labels;
}

double GradCheckResult::max_rel_error() const {
  return std::max(max_rel_error_features, max_rel_error_weights);
}

GradCheckResult grad_check(const LossConfig& config, std::size_t c, std::size_t d, std::size_t n,
                           std::uint64_t seed, const GradCheckOptions& options) {
  config.validate();
  Rng rng(seed);
  Batch batch{Matrix(n, d), std::vector<int>(n)};
  ClassifierHead head{Matrix(c, d)};
  for (int attempt = 0;; ++attempt) {
    for (double& v : batch.features.data()) v = rng.gaussian(0.0, 1.0);
    for (double& v : head.weights.data()) v = rng.gaussian(0.0, 1.0);
    // Cover every class when n >= c so no weight row sees only tiny
    // probabilities, whose finite differences drown in rounding.
    for (std::size_t i = 0; i < n; ++i) {
      batch.labels[i] = static_cast<int>(i < c ? i : rng.uniform_index(c));
    }
    rng.shuffle(std::span<int>(batch.labels));
    if (config.variant != LossVariant::a_softmax ||
        !near_branch_boundary(batch, head, config.m_mult)) {
      break;
    }
    if (attempt > 1000) throw DomainError("grad_check: could not sample away from branch boundaries");
  }

  const LossOutput analytic = loss_forward_backward(batch, head, config);
  const double h = options.step;
  const double inv_n = 1.0 / static_cast<double>(n);
  GradCheckResult result;

  // Feature i only enters sample i's loss, so differentiate that term alone.
  for (std::size_t i = 0; i < n; ++i) {
    Batch single{Matrix(1, d), {batch.labels[i]}};
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t q = 0; q < d; ++q) single.features(0, q) = batch.features(i, q);
      single.features(0, k) += h;
      const double plus = per_sample_losses(single, head, config)[0];
      single.features(0, k) -= 2.0 * h;
      const double minus = per_sample_losses(single, head, config)[0];
      const double numeric = (plus - minus) / (2.0 * h) * inv_n;
      const double a = analytic.grad_features(i, k) + options.corrupt_analytic;
      result.max_rel_error_features =
          std::max(result.max_rel_error_features, relative_error(a, numeric));
    }
  }

  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      ClassifierHead shifted = head;
      shifted.weights(j, k) += h;
      const auto plus = per_sample_losses(batch, shifted, config);
      shifted.weights(j, k) -= 2.0 * h;
      const auto minus = per_sample_losses(batch, shifted, config);
      double diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) diff += plus[i] - minus[i];
      const double numeric = diff / (2.0 * h) * inv_n;
      const double a = analytic.grad_weights(j, k) + options.corrupt_analytic;
      result.max_rel_error_weights =
          std::max(result.max_rel_error_weights, relative_error(a, numeric));
    }
  }
  return result;
}

}  // namespace amlab
