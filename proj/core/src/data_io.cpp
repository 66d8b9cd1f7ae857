// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <utility>

#include "amlab/norm_layer.hpp"
#include "amlab/rng.hpp"

namespace amlab {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& dataset) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(dataset.class_count));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    groups[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }
  return groups;
}

using IndexPair = std::pair<std::size_t, std::size_t>;

IndexPair ordered(std::size_t a, std::size_t b) { return a < b ? IndexPair{a, b} : IndexPair{b, a}; }

// Draws `wanted` distinct unordered pairs from a space of `available`. Dense
// requests enumerate and shuffle; sparse ones use rejection sampling.
template <typename Enumerate, typename Draw>
std::vector<IndexPair> distinct_pairs(std::size_t wanted, std::size_t available, Rng& rng,
                                      Enumerate enumerate, Draw draw) {
  std::vector<IndexPair> out;
  if (wanted == 0) return out;
  if (2 * wanted > available) {
    std::vector<IndexPair> all = enumerate();
    rng.shuffle(std::span<IndexPair>(all));
    all.resize(wanted);
    return all;
  }
  std::set<IndexPair> seen;
  while (out.size() < wanted) {
    const IndexPair p = draw();
    if (seen.insert(p).second) out.push_back(p);
  }
  return out;
}

}  // namespace

void LabeledDataset::validate() const {
  if (inputs.rows() == 0) throw DomainError("dataset is empty");
  if (labels.size() != inputs.rows()) {
    throw DomainError("dataset has " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(inputs.rows()) + " samples");
  }
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw DomainError("dataset label " + std::to_string(y) + " outside [0, " +
                        std::to_string(class_count) + ")");
    }
  }
  if (!inputs.all_finite()) throw DomainError("dataset has non-finite inputs");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out{Matrix(indices.size(), inputs.cols()), {}, class_count};
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = inputs.row(indices[r]);
    std::copy(src.begin(), src.end(), out.inputs.row(r).begin());
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

LabeledDataset synth_blobs(int class_count, std::size_t dim, std::size_t samples_per_class,
                           double spread, std::uint64_t seed, std::uint64_t stream) {
  if (class_count < 2) throw DomainError("synth_blobs: need at least 2 classes");
  if (dim == 0 || samples_per_class == 0) throw DomainError("synth_blobs: empty shape");
  if (!(spread >= 0.0)) throw DomainError("synth_blobs: spread must be non-negative");

  Rng center_rng(seed);
  Matrix centers(static_cast<std::size_t>(class_count), dim);
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    // A standard normal vector, normalized, is uniform on the sphere.
    for (;;) {
      for (double& v : centers.row(k)) v = center_rng.gaussian(0.0, 1.0);
      if (norm2(centers.row(k)) > 1e-6) break;
    }
    const NormCache unit = l2_normalize(centers.row(k));
    std::copy(unit.output.begin(), unit.output.end(), centers.row(k).begin());
  }

  Rng sample_rng = center_rng.fork(stream + 1);
  const std::size_t n = centers.rows() * samples_per_class;
  LabeledDataset ds{Matrix(n, dim), std::vector<int>(n), class_count};
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      const std::size_t i = k * samples_per_class + s;
      ds.labels[i] = static_cast<int>(k);
      for (std::size_t q = 0; q < dim; ++q) {
        ds.inputs(i, q) = centers(k, q) + sample_rng.gaussian(0.0, spread);
      }
    }
  }
  return ds;
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) {
    throw IdxError(IdxError::Kind::truncated, "IDX images: truncated header");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) {
    throw IdxError(IdxError::Kind::bad_magic, "IDX images: bad magic " + std::to_string(magic));
  }
  IdxImages img;
  img.count = read_be32(bytes, 4);
  img.rows = read_be32(bytes, 8);
  img.cols = read_be32(bytes, 12);
  const std::size_t need = img.count * img.rows * img.cols;
  if (bytes.size() - 16 < need) {
    throw IdxError(IdxError::Kind::truncated,
                   "IDX images: truncated pixel data, expected " + std::to_string(need) +
                       " bytes, found " + std::to_string(bytes.size() - 16));
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) {
    throw IdxError(IdxError::Kind::truncated, "IDX labels: truncated header");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) {
    throw IdxError(IdxError::Kind::bad_magic, "IDX labels: bad magic " + std::to_string(magic));
  }
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count) {
    throw IdxError(IdxError::Kind::truncated,
                   "IDX labels: truncated, expected " + std::to_string(count) + " labels");
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

LabeledDataset parse_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path, PixelScaling scaling) {
  const IdxImages img = parse_idx_images(read_file(images_path));
  const std::vector<std::uint8_t> labels = parse_idx_labels(read_file(labels_path));
  if (labels.size() != img.count) {
    throw IdxError(IdxError::Kind::count_mismatch,
                   "IDX count mismatch: " + std::to_string(img.count) + " images, " +
                       std::to_string(labels.size()) + " labels");
  }
  const std::size_t dim = img.rows * img.cols;
  LabeledDataset ds{Matrix(img.count, dim), std::vector<int>(img.count), 0};
  for (std::size_t i = 0; i < img.count; ++i) {
    for (std::size_t q = 0; q < dim; ++q) {
      const double byte = img.pixels[i * dim + q];
      ds.inputs(i, q) = scaling == PixelScaling::unit ? byte / 255.0 : (byte - 128.0) / 128.0;
    }
    ds.labels[i] = labels[i];
    ds.class_count = std::max(ds.class_count, ds.labels[i] + 1);
  }
  ds.validate();
  return ds;
}

void write_idx(const LabeledDataset& dataset, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (rows * cols != dataset.inputs.cols()) {
    throw DimensionError("write_idx: " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " images do not match input width " +
                         std::to_string(dataset.inputs.cols()));
  }
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw IdxError(IdxError::Kind::io, "write_idx: cannot open output files");
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(dataset.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : dataset.inputs.data()) {
    const double byte = std::clamp(std::round(v * 255.0), 0.0, 255.0);
    img.put(static_cast<char>(static_cast<std::uint8_t>(byte)));
  }
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (int y : dataset.labels) {
    if (y < 0 || y > 255) throw DomainError("write_idx: label does not fit in a byte");
    lab.put(static_cast<char>(static_cast<std::uint8_t>(y)));
  }
  if (!img || !lab) throw IdxError(IdxError::Kind::io, "write_idx: write failed");
}

VerificationProtocol make_verification_pairs(const LabeledDataset& dataset, std::size_t pair_count,
                                             std::uint64_t seed) {
  dataset.validate();
  if (pair_count == 0 || pair_count % 2 != 0) {
    throw DomainError("verification pairs: pair_count must be even and positive");
  }
  const auto groups = indices_by_class(dataset);
  std::size_t available_same = 0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].size() < 2) {
      throw DomainError("verification pairs: insufficient samples in class " + std::to_string(k));
    }
    available_same += groups[k].size() * (groups[k].size() - 1) / 2;
  }
  const std::size_t n = dataset.size();
  const std::size_t available_diff = n * (n - 1) / 2 - available_same;
  const std::size_t half = pair_count / 2;
  if (half > available_same || half > available_diff) {
    throw DomainError("verification pairs: insufficient samples for " +
                      std::to_string(pair_count) + " distinct pairs");
  }

  Rng rng(seed);
  const auto same = distinct_pairs(
      half, available_same, rng,
      [&] {
        std::vector<IndexPair> all;
        for (const auto& g : groups) {
          for (std::size_t x = 0; x < g.size(); ++x) {
            for (std::size_t y = x + 1; y < g.size(); ++y) all.emplace_back(g[x], g[y]);
          }
        }
        return all;
      },
      [&] {
        const std::size_t a = rng.uniform_index(n);
        const auto& g = groups[static_cast<std::size_t>(dataset.labels[a])];
        for (;;) {
          const std::size_t b = g[rng.uniform_index(g.size())];
          if (b != a) return ordered(a, b);
        }
      });
  const auto diff = distinct_pairs(
      half, available_diff, rng,
      [&] {
        std::vector<IndexPair> all;
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = a + 1; b < n; ++b) {
            if (dataset.labels[a] != dataset.labels[b]) all.emplace_back(a, b);
          }
        }
        return all;
      },
      [&] {
        for (;;) {
          const std::size_t a = rng.uniform_index(n);
          const std::size_t b = rng.uniform_index(n);
          if (dataset.labels[a] != dataset.labels[b]) return ordered(a, b);
        }
      });

  VerificationProtocol protocol;
  protocol.pairs.reserve(pair_count);
  for (const auto& [a, b] : same) protocol.pairs.push_back({a, b, true});
  for (const auto& [a, b] : diff) protocol.pairs.push_back({a, b, false});
  return protocol;
}

IdentificationProtocol make_identification_protocol(const LabeledDataset& dataset,
                                                    std::size_t gallery_per_class,
                                                    std::size_t probe_per_class,
                                                    std::size_t distractor_classes,
                                                    std::uint64_t seed) {
  dataset.validate();
  if (gallery_per_class == 0 || probe_per_class == 0) {
    throw DomainError("identification protocol: need at least one gallery and one probe per class");
  }
  const auto classes = static_cast<std::size_t>(dataset.class_count);
  if (distractor_classes >= classes) {
    throw DomainError("identification protocol: insufficient classes, " +
                      std::to_string(distractor_classes) + " distractor classes of " +
                      std::to_string(classes));
  }

  Rng rng(seed);
  std::vector<int> order(classes);
  for (std::size_t k = 0; k < classes; ++k) order[k] = static_cast<int>(k);
  rng.shuffle(std::span<int>(order));
  std::vector<bool> is_distractor(classes, false);
  for (std::size_t k = 0; k < distractor_classes; ++k) {
    is_distractor[static_cast<std::size_t>(order[k])] = true;
  }

  auto groups = indices_by_class(dataset);
  IdentificationProtocol protocol;
  for (std::size_t k = 0; k < classes; ++k) {
    auto& g = groups[k];
    if (is_distractor[k]) {
      protocol.distractor_classes.push_back(static_cast<int>(k));
      protocol.distractors.insert(protocol.distractors.end(), g.begin(), g.end());
      continue;
    }
    if (g.size() < gallery_per_class + probe_per_class) {
      throw DomainError("identification protocol: insufficient samples in class " +
                        std::to_string(k));
    }
    rng.shuffle(std::span<std::size_t>(g));
    for (std::size_t q = 0; q < gallery_per_class; ++q) {
      protocol.gallery.push_back(g[q]);
      protocol.gallery_labels.push_back(static_cast<int>(k));
    }
    for (std::size_t q = 0; q < probe_per_class; ++q) {
      protocol.probes.push_back(g[gallery_per_class + q]);
      protocol.probe_labels.push_back(static_cast<int>(k));
    }
  }
  return protocol;
}

}  // namespace amlab
