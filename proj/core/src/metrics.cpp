// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>

#include "amlab/data_io.hpp"
#include "amlab/error.hpp"
#include "amlab/format.hpp"
#include "amlab/norm_layer.hpp"
#include "amlab/numeric.hpp"

namespace amlab {
namespace {

void check_scores(std::span<const double> scores, const char* what) {
  if (scores.empty()) throw DomainError(std::string("roc: empty ") + what + " list");
  for (double s : scores) {
    if (!std::isfinite(s)) throw DomainError(std::string("roc: non-finite ") + what + " score");
  }
}

// Number of entries >= t in an ascending-sorted array.
std::size_t count_at_least(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
}

void check_same_width(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.empty() && !b.empty() && a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": feature widths differ, " + a.shape_string() +
                         " vs " + b.shape_string());
  }
}

double angle_between_units(std::span<const double> a, std::span<const double> b) {
  return std::acos(std::clamp(dot(a, b), -1.0, 1.0));
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const NormCache ua = l2_normalize(a);
  const NormCache ub = l2_normalize(b);
  return std::clamp(dot(ua.output, ub.output), -1.0, 1.0);
}

Matrix normalized_rows(const Matrix& features) {
  Matrix out = features;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const NormCache c = l2_normalize(features.row(i));
    std::copy(c.output.begin(), c.output.end(), out.row(i).begin());
  }
  return out;
}

RocCurve roc(std::span<const double> genuine_scores, std::span<const double> impostor_scores) {
  check_scores(genuine_scores, "genuine");
  check_scores(impostor_scores, "impostor");
  std::vector<double> genuine(genuine_scores.begin(), genuine_scores.end());
  std::vector<double> impostor(impostor_scores.begin(), impostor_scores.end());
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());

  std::vector<double> thresholds = genuine;
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const auto ng = static_cast<double>(genuine.size());
  const auto ni = static_cast<double>(impostor.size());
  RocCurve curve;
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    curve.points.push_back({t, static_cast<double>(count_at_least(impostor, t)) / ni,
                            static_cast<double>(count_at_least(genuine, t)) / ng});
  }
  return curve;
}

double vr_at_far(const RocCurve& curve, double far_target) {
  if (!(far_target >= 0.0 && far_target <= 1.0)) {
    throw DomainError("vr_at_far: target outside [0, 1]");
  }
  for (const auto& p : curve.points) {
    if (p.far <= far_target) return p.vr;
  }
  return 0.0;
}

double CmcCurve::rank(std::size_t k) const {
  if (k == 0) throw DomainError("cmc: ranks start at 1");
  if (rank_accuracies.empty()) return 0.0;
  return rank_accuracies[std::min(k, rank_accuracies.size()) - 1];
}

CmcCurve cmc(const Matrix& probes, std::span<const int> probe_labels, const Matrix& gallery,
             std::span<const int> gallery_labels, const Matrix& distractors) {
  check_same_width(probes, gallery, "cmc");
  check_same_width(gallery, distractors, "cmc");
  if (probe_labels.size() != probes.rows() || gallery_labels.size() != gallery.rows()) {
    throw DimensionError("cmc: label count does not match feature rows");
  }
  if (probes.rows() == 0 || gallery.rows() == 0) throw DomainError("cmc: empty probe or gallery set");

  const Matrix p = normalized_rows(probes);
  const Matrix g = normalized_rows(gallery);
  const Matrix x = normalized_rows(distractors);
  const std::size_t entries = gallery.rows() + distractors.rows();
  std::vector<std::size_t> rank_histogram(entries + 1, 0);

  std::vector<double> others;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double mate = -2.0;
    bool found = false;
    others.clear();
    for (std::size_t j = 0; j < g.rows(); ++j) {
      const double score = dot(p.row(i), g.row(j));
      if (gallery_labels[j] == probe_labels[i]) {
        mate = std::max(mate, score);
        found = true;
      } else {
        others.push_back(score);
      }
    }
    if (!found) {
      throw DomainError("cmc: probe identity " + std::to_string(probe_labels[i]) +
                        " has no gallery entry");
    }
    for (std::size_t j = 0; j < x.rows(); ++j) others.push_back(dot(p.row(i), x.row(j)));
    std::size_t rank = 1;
    for (double s : others) rank += (s > mate) ? 1 : 0;
    ++rank_histogram[rank];
  }

  CmcCurve curve;
  curve.rank_accuracies.resize(entries);
  std::size_t cumulative = 0;
  for (std::size_t k = 1; k <= entries; ++k) {
    cumulative += rank_histogram[k];
    curve.rank_accuracies[k - 1] = static_cast<double>(cumulative) / static_cast<double>(p.rows());
  }
  return curve;
}

double dir_at_far(const Matrix& probes, std::span<const std::optional<int>> probe_labels,
                  const Matrix& gallery, std::span<const int> gallery_labels, double far_target) {
  check_same_width(probes, gallery, "dir_at_far");
  if (probe_labels.size() != probes.rows() || gallery_labels.size() != gallery.rows()) {
    throw DimensionError("dir_at_far: label count does not match feature rows");
  }
  if (gallery.rows() == 0) throw DomainError("dir_at_far: empty gallery");
  if (!(far_target >= 0.0 && far_target <= 1.0)) {
    throw DomainError("dir_at_far: target outside [0, 1]");
  }

  const Matrix p = normalized_rows(probes);
  const Matrix g = normalized_rows(gallery);
  std::vector<double> impostor_tops;
  std::vector<double> mated_correct_tops;  // top score of mated probes whose top match is right
  std::size_t mated = 0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::size_t best = 0;
    double best_score = dot(p.row(i), g.row(0));
    for (std::size_t j = 1; j < g.rows(); ++j) {
      const double score = dot(p.row(i), g.row(j));
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (!probe_labels[i].has_value()) {
      impostor_tops.push_back(best_score);
    } else {
      ++mated;
      if (gallery_labels[best] == *probe_labels[i]) mated_correct_tops.push_back(best_score);
    }
  }
  if (impostor_tops.empty()) throw DomainError("dir_at_far: no impostor probes, threshold undefined");
  if (mated == 0) throw DomainError("dir_at_far: no mated probes");

  const std::size_t n_imp = impostor_tops.size();
  std::size_t k = 0;
  while (k < n_imp && static_cast<double>(k + 1) / static_cast<double>(n_imp) <= far_target) ++k;
  std::size_t detected = mated_correct_tops.size();
  if (k < n_imp) {
    std::sort(impostor_tops.begin(), impostor_tops.end(), std::greater<>());
    const double bar = impostor_tops[k];
    detected = static_cast<std::size_t>(
        std::count_if(mated_correct_tops.begin(), mated_correct_tops.end(),
                      [bar](double s) { return s > bar; }));
  }
  return static_cast<double>(detected) / static_cast<double>(mated);
}

FeatureStats feature_stats(const Matrix& features, std::span<const int> labels) {
  if (labels.size() != features.rows()) {
    throw DimensionError("feature_stats: label count does not match feature rows");
  }
  if (features.rows() == 0) throw DomainError("feature_stats: no features");
  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw DomainError("feature_stats: negative label");
    max_label = std::max(max_label, y);
  }
  const auto classes = static_cast<std::size_t>(max_label + 1);
  if (classes < 2) throw DomainError("feature_stats: need at least two classes");

  const Matrix unit = normalized_rows(features);
  Matrix sums(classes, features.cols());
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    axpy(1.0, unit.row(i), sums.row(k));
    ++counts[k];
  }

  FeatureStats stats;
  stats.centers = Matrix(classes, features.cols());
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k] == 0) throw DomainError("feature_stats: class " + std::to_string(k) + " is empty");
    // Class means are compared against a small floor since they can cancel.
    const NormCache c = l2_normalize(sums.row(k), 1e-12 * static_cast<double>(counts[k]));
    std::copy(c.output.begin(), c.output.end(), stats.centers.row(k).begin());
  }

  double intra = 0.0;
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    intra += angle_between_units(unit.row(i), stats.centers.row(static_cast<std::size_t>(labels[i])));
  }
  stats.mean_intra_class_angle_rad = intra / static_cast<double>(unit.rows());

  double inter = kPi;
  for (std::size_t a = 0; a < classes; ++a) {
    for (std::size_t b = a + 1; b < classes; ++b) {
      inter = std::min(inter, angle_between_units(stats.centers.row(a), stats.centers.row(b)));
    }
  }
  stats.min_inter_center_angle_rad = inter;
  return stats;
}

void write_features_csv(std::ostream& out, const Matrix& features, std::span<const int> labels) {
  if (labels.size() != features.rows()) {
    throw DimensionError("export_features: label count does not match feature rows");
  }
  if (features.cols() == 3) {
    out << "x,y,z,label\n";
  } else {
    for (std::size_t q = 0; q < features.cols(); ++q) out << 'f' << q << ',';
    out << "label\n";
  }
  const Matrix unit = normalized_rows(features);
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    for (double v : unit.row(i)) out << format_roundtrip(v) << ',';
    out << labels[i] << '\n';
  }
}

void export_features(const Matrix& features, std::span<const int> labels,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("export_features: cannot open " + path.string());
  write_features_csv(out, features, labels);
  if (!out) throw IoError("export_features: write failed for " + path.string());
}

MetricsReport evaluate_embeddings(const Matrix& features, const LabeledDataset& dataset,
                                  const EvalSettings& settings) {
  dataset.validate();
  if (features.rows() != dataset.size()) {
    throw DimensionError("evaluate: " + std::to_string(features.rows()) + " features for " +
                         std::to_string(dataset.size()) + " samples");
  }
  MetricsReport report;
  const Matrix unit = normalized_rows(features);

  const VerificationProtocol pairs =
      make_verification_pairs(dataset, settings.verification_pairs, settings.seed);
  std::vector<double> genuine;
  std::vector<double> impostor;
  for (const auto& pr : pairs.pairs) {
    const double score = std::clamp(dot(unit.row(pr.a), unit.row(pr.b)), -1.0, 1.0);
    (pr.same ? genuine : impostor).push_back(score);
  }
  const RocCurve curve = roc(genuine, impostor);
  for (double target : settings.far_targets) {
    report.vr_at_far.emplace_back(target, vr_at_far(curve, target));
  }

  const IdentificationProtocol id = make_identification_protocol(
      dataset, settings.gallery_per_class, settings.probe_per_class, settings.distractor_classes,
      settings.seed + 1);
  const LabeledDataset unit_ds{unit, dataset.labels, dataset.class_count};
  const Matrix gallery_features = unit_ds.subset(id.gallery).inputs;
  const Matrix probe_features = unit_ds.subset(id.probes).inputs;
  const Matrix distractor_features = unit_ds.subset(id.distractors).inputs;

  report.rank1 = cmc(probe_features, id.probe_labels, gallery_features, id.gallery_labels,
                     distractor_features)
                     .rank(1);

  if (id.open_set()) {
    Matrix open_probes(id.probes.size() + id.distractors.size(), unit.cols());
    std::vector<std::optional<int>> open_labels;
    for (std::size_t i = 0; i < id.probes.size(); ++i) {
      std::copy(probe_features.row(i).begin(), probe_features.row(i).end(),
                open_probes.row(i).begin());
      open_labels.emplace_back(id.probe_labels[i]);
    }
    for (std::size_t i = 0; i < id.distractors.size(); ++i) {
      std::copy(distractor_features.row(i).begin(), distractor_features.row(i).end(),
                open_probes.row(id.probes.size() + i).begin());
      open_labels.emplace_back(std::nullopt);
    }
    report.dir_at_far = std::pair{
        settings.dir_far_target, dir_at_far(open_probes, open_labels, gallery_features,
                                            id.gallery_labels, settings.dir_far_target)};
  }

  const FeatureStats stats = feature_stats(features, dataset.labels);
  report.mean_intra_angle_deg = rad_to_deg(stats.mean_intra_class_angle_rad);
  report.min_inter_center_angle_deg = rad_to_deg(stats.min_inter_center_angle_rad);
  return report;
}

}  // namespace amlab
