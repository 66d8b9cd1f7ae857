// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "amlab/data_io.hpp"
#include "amlab/head.hpp"
#include "amlab/losses.hpp"
#include "amlab/matrix.hpp"
#include "amlab/rng.hpp"

namespace amlab {

/// Fully-connected ReLU embedding network, input -> hidden... -> embed_dim.
/// The last layer is linear.
struct MlpConfig {
  std::vector<std::size_t> layer_widths{32, 64, 64, 3};

  std::size_t input_dim() const { return layer_widths.front(); }
  std::size_t embed_dim() const { return layer_widths.back(); }
  /// Throws DomainError without a hidden layer or with embed_dim < 2.
  void validate() const;
};

struct DenseLayer {
  Matrix weight;  ///< out x in
  std::vector<double> bias;
};

class Mlp {
 public:
  /// Activations kept by a training forward pass.
  struct Tape {
    std::vector<Matrix> inputs;  ///< input to each layer
    std::vector<Matrix> pre;     ///< pre-activation output of each layer
  };

  Mlp() = default;
  /// Throws DimensionError when consecutive layers do not chain.
  explicit Mlp(std::vector<DenseLayer> layers);

  /// He-normal weights (stddev sqrt(2 / fan_in)) and zero biases.
  static Mlp he_normal(const MlpConfig& config, Rng& rng);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  std::size_t input_dim() const;
  std::size_t embed_dim() const;

  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, Tape& tape) const;
  /// Gradients of every layer given dL/d(output); same layout as layers().
  std::vector<DenseLayer> backward(const Tape& tape, const Matrix& grad_output) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Deterministic forward pass. Throws DimensionError on an input width mismatch.
Matrix embed(const Mlp& net, const Matrix& inputs);

struct TrainConfig {
  double lr_base = 0.1;
  std::vector<std::int64_t> lr_decay_iters;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::int64_t total_iters = 1000;
  std::uint64_t seed = 0;

  /// Throws DomainError on non-increasing decay points or ones past the end.
  void validate() const;
};

/// lr_base * lr_decay_factor^(number of decay points <= iteration).
double learning_rate_at(const TrainConfig& opt, std::int64_t iteration);

/// Momentum SGD with L2 weight decay:
///   v <- momentum * v - lr * (grad + weight_decay * param);  param <- param + v
/// Pass apply_weight_decay = false for biases.
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const TrainConfig& opt, double lr, bool apply_weight_decay);

struct Model {
  Mlp net;
  ClassifierHead head;
};

struct TrainHistory {
  std::vector<double> loss;            ///< per iteration
  std::vector<double> learning_rate;   ///< per iteration
  std::vector<double> lambda;          ///< per iteration, 0 unless a_softmax
  std::vector<double> epoch_accuracy;  ///< after each epoch, and after a final partial one
  Model model;

  /// CSV `iter,loss,lr,lambda` with round-trip decimal values.
  void write_csv(std::ostream& out) const;
};

/// Trains network and head together with mini-batch momentum SGD. Batches
/// come from a seeded reshuffle at each epoch; weight decay applies to
/// weight matrices and the head but not biases; the head is re-normalized
/// after every step when the loss normalizes weights.
///
/// Throws DivergenceError at the first iteration with a non-finite loss,
/// parameter or embedding.
TrainHistory train(const LabeledDataset& dataset, const MlpConfig& mlp, const LossConfig& loss,
                   const TrainConfig& opt);

/// Little-endian checkpoint: "AMLB", u32 version, then per tensor u32 name
/// length, name bytes, u32 rows, u32 cols and rows*cols f64 values. Tensors
/// are layer{i}.weight, layer{i}.bias (1 x out) and head.weight.
void save_checkpoint(const Model& model, std::ostream& out);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Throws IoError on a missing, truncated or inconsistent checkpoint.
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace amlab
