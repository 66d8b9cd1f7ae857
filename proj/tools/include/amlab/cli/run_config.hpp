// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "amlab/data_io.hpp"
#include "amlab/error.hpp"
#include "amlab/losses.hpp"
#include "amlab/metrics.hpp"
#include "amlab/trainer.hpp"

namespace amlab::cli {

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct SyntheticData {
  int classes = 10;
  std::size_t dim = 32;
  std::size_t train_per_class = 200;
  std::size_t eval_per_class = 100;
  double spread = 0.2;
};

struct IdxData {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path eval_images;  ///< empty: evaluate on the training files
  std::filesystem::path eval_labels;
  PixelScaling scaling = PixelScaling::unit;
};

struct DataConfig {
  std::optional<SyntheticData> synthetic;  ///< exactly one of the two is set
  std::optional<IdxData> idx;
};

/// Everything a run needs, parsed from one JSON document.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "amlab_out";
  DataConfig data;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t embed_dim = 3;
  LossConfig loss;
  TrainConfig train;
  EvalSettings eval;

  MlpConfig mlp_for(std::size_t input_dim) const;
};

/// Parses and validates a config document. Unknown keys, wrong types and
/// out-of-range values raise ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Seeds derived from RunConfig::seed for each consumer.
struct DerivedSeeds {
  std::uint64_t data;
  std::uint64_t train;
  std::uint64_t eval;
};
DerivedSeeds derive_seeds(std::uint64_t seed);

LabeledDataset load_train_split(const RunConfig& config);
LabeledDataset load_eval_split(const RunConfig& config);

}  // namespace amlab::cli
