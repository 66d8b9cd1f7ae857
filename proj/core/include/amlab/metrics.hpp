// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "amlab/matrix.hpp"

namespace amlab {

/// Cosine of the angle between two vectors, clamped to [-1, 1].
/// Throws DegenerateVectorError when either norm is <= 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Copy of `features` with every row scaled to unit norm.
Matrix normalized_rows(const Matrix& features);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  ///< accepted impostors / impostors
  double vr = 0.0;   ///< accepted genuines / genuines
};

/// Operating points at every distinct score, ascending by threshold. A pair
/// is accepted when its score >= threshold.
struct RocCurve {
  std::vector<RocPoint> points;
};

/// Throws DomainError when either list is empty or holds a non-finite score.
RocCurve roc(std::span<const double> genuine_scores, std::span<const double> impostor_scores);

/// VR at the smallest threshold whose FAR <= far_target, without
/// interpolation; 0 when only the accept-nothing operating point qualifies.
double vr_at_far(const RocCurve& curve, double far_target);

/// rank_accuracies[k - 1] is the rank-k identification rate.
struct CmcCurve {
  std::vector<double> rank_accuracies;

  double rank(std::size_t k) const;
};

/// Closed-set CMC against gallery plus distractors, by cosine score.
///
/// A probe's mated score is its best score over gallery entries of its own
/// identity; its rank is 1 + the number of other entries (other identities
/// and distractors) scoring strictly higher. Ties favor the mate.
CmcCurve cmc(const Matrix& probes, std::span<const int> probe_labels, const Matrix& gallery,
             std::span<const int> gallery_labels, const Matrix& distractors);

/// Open-set detection and identification rate.
///
/// Probes with no label are impostors. Let K be the largest count with
/// K / impostors <= far_target. A mated probe counts when its top gallery
/// match has its identity and scores strictly above the (K+1)-th highest
/// impostor top score (every mated probe with a correct top match counts when
/// K equals the impostor count). Top-match ties go to the lower gallery index.
///
/// Throws DomainError without at least one impostor and one mated probe.
double dir_at_far(const Matrix& probes, std::span<const std::optional<int>> probe_labels,
                  const Matrix& gallery, std::span<const int> gallery_labels, double far_target);

struct FeatureStats {
  double mean_intra_class_angle_rad = 0.0;
  double min_inter_center_angle_rad = 0.0;
  Matrix centers;  ///< one unit row per class
};

/// Class center = normalized mean of normalized features. Requires every
/// class in [0, max label] to have a sample and at least two classes.
FeatureStats feature_stats(const Matrix& features, std::span<const int> labels);

/// CSV of L2-normalized features plus label. Header `x,y,z,label` for 3-D
/// features, `f0,...,f{d-1},label` otherwise. Values use the shortest
/// round-trip decimal form.
void write_features_csv(std::ostream& out, const Matrix& features, std::span<const int> labels);
/// Throws IoError when the file cannot be written.
void export_features(const Matrix& features, std::span<const int> labels,
                     const std::filesystem::path& path);

/// Protocol and reporting parameters of an evaluation run.
struct EvalSettings {
  std::size_t verification_pairs = 2000;
  std::vector<double> far_targets{0.01, 0.001};
  std::size_t gallery_per_class = 1;
  std::size_t probe_per_class = 5;
  std::size_t distractor_classes = 0;
  double dir_far_target = 0.01;
  std::uint64_t seed = 0;
};

/// Everything a metrics report carries. dir_at_far is empty for a
/// closed-set protocol.
struct MetricsReport {
  std::vector<std::pair<double, double>> vr_at_far;  ///< (far target, VR)
  std::optional<std::pair<double, double>> dir_at_far;
  double rank1 = 0.0;
  double mean_intra_angle_deg = 0.0;
  double min_inter_center_angle_deg = 0.0;
};

struct LabeledDataset;

/// Builds the verification and identification protocols over `features`
/// (one row per dataset sample) and computes every reported metric.
MetricsReport evaluate_embeddings(const Matrix& features, const LabeledDataset& dataset,
                                  const EvalSettings& settings);

}  // namespace amlab
