// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amlab/error.hpp"
#include "amlab/matrix.hpp"

namespace amlab {

/// Inputs with integer labels in [0, class_count).
struct LabeledDataset {
  Matrix inputs;  ///< n x input_dim, one flattened sample per row
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return inputs.rows(); }
  /// Throws DomainError when the invariants do not hold.
  void validate() const;
  /// Rows selected by index, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// Gaussian clusters around class centers drawn uniformly on the unit sphere.
/// Samples are laid out class by class. `stream` selects an independent draw
/// of samples around the same centers, so stream 0 and stream 1 of one seed
/// form a train/eval split.
LabeledDataset synth_blobs(int class_count, std::size_t dim, std::size_t samples_per_class,
                           double spread, std::uint64_t seed, std::uint64_t stream = 0);

/// How IDX pixel bytes map to inputs.
enum class PixelScaling {
  unit,      ///< byte / 255, in [0, 1]
  centered,  ///< (byte - 128) / 128, the face-pipeline convention
};

class IdxError : public IoError {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  ///< count * rows * cols, row-major per image
};

/// Big-endian IDX3 image file (magic 0x00000803).
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
/// Big-endian IDX1 label file (magic 0x00000801).
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Loads an image/label file pair. Images are flattened row-major; the class
/// count is one past the largest label.
LabeledDataset parse_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path,
                         PixelScaling scaling = PixelScaling::unit);

/// Writes a dataset whose inputs are byte/255 values back to IDX files.
/// Inputs are rounded to the nearest byte.
void write_idx(const LabeledDataset& dataset, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

struct VerificationPair {
  std::size_t a = 0;
  std::size_t b = 0;  ///< a < b
  bool same = false;

  friend bool operator==(const VerificationPair&, const VerificationPair&) = default;
};

struct VerificationProtocol {
  std::vector<VerificationPair> pairs;
};

/// pair_count / 2 same-class and pair_count / 2 different-class pairs, with
/// no unordered pair repeated. Throws DomainError when pair_count is odd or
/// the dataset cannot supply that many distinct pairs.
VerificationProtocol make_verification_pairs(const LabeledDataset& dataset, std::size_t pair_count,
                                             std::uint64_t seed);

/// Gallery, mated probes and distractors, as sample indices into a dataset.
///
/// Distractor classes are held out entirely: none of their samples is a
/// probe or a gallery entry. Their samples serve as extra gallery entries for
/// CMC and as impostor probes for open-set identification.
struct IdentificationProtocol {
  std::vector<std::size_t> gallery;
  std::vector<int> gallery_labels;
  std::vector<std::size_t> probes;
  std::vector<int> probe_labels;
  std::vector<std::size_t> distractors;
  std::vector<int> distractor_classes;

  bool open_set() const noexcept { return !distractors.empty(); }
};

IdentificationProtocol make_identification_protocol(const LabeledDataset& dataset,
                                                    std::size_t gallery_per_class,
                                                    std::size_t probe_per_class,
                                                    std::size_t distractor_classes,
                                                    std::uint64_t seed);

}  // namespace amlab
