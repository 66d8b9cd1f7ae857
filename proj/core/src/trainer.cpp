// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/trainer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "amlab/error.hpp"
#include "amlab/format.hpp"

namespace amlab {
namespace {

constexpr std::array<char, 4> kCheckpointMagic{'A', 'M', 'L', 'B'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kPlainHeadInitStd = 0.01;

void add_bias(Matrix& m, const std::vector<double>& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) axpy(1.0, bias, m.row(i));
}

Matrix layer_forward(const DenseLayer& layer, const Matrix& x) {
  Matrix out = matmul_transposed(x, layer.weight);
  add_bias(out, layer.bias);
  return out;
}

void relu_inplace(Matrix& m) {
  for (double& v : m.data()) v = std::max(v, 0.0);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v), static_cast<char>(v >> 8),
                              static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (std::size_t k = 0; k < 8; ++k) b[k] = static_cast<char>(bits >> (8 * k));
  out.write(b.data(), b.size());
}

void put_tensor(std::ostream& out, const std::string& name, std::size_t rows, std::size_t cols,
                std::span<const double> data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  for (double v : data) put_f64(out, v);
}

template <std::size_t N>
bool read_exact(std::istream& in, std::array<unsigned char, N>& buf) {
  in.read(reinterpret_cast<char*>(buf.data()), N);
  return static_cast<std::size_t>(in.gcount()) == N;
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!read_exact(in, b)) throw IoError(std::string("checkpoint: truncated ") + what);
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!read_exact(in, b)) throw IoError("checkpoint: truncated tensor data");
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < 8; ++k) bits |= std::uint64_t{b[k]} << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace

void MlpConfig::validate() const {
  if (layer_widths.size() < 3) {
    throw DomainError("mlp: need input, at least one hidden layer and an embedding layer");
  }
  for (std::size_t w : layer_widths) {
    if (w == 0) throw DomainError("mlp: layer widths must be positive");
  }
  if (embed_dim() < 2) throw DomainError("mlp: embedding dimension must be >= 2");
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) {
      throw DimensionError("mlp: layer " + std::to_string(l) + " bias does not match weight " +
                           layers_[l].weight.shape_string());
    }
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw DimensionError("mlp: layer " + std::to_string(l) + " weight " +
                           layers_[l].weight.shape_string() + " does not chain with " +
                           layers_[l - 1].weight.shape_string());
    }
  }
}

Mlp Mlp::he_normal(const MlpConfig& config, Rng& rng) {
  config.validate();
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < config.layer_widths.size(); ++l) {
    const std::size_t in = config.layer_widths[l];
    const std::size_t out = config.layer_widths[l + 1];
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& v : layer.weight.data()) v = rng.gaussian(0.0, stddev);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
std::size_t Mlp::embed_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

Matrix Mlp::forward(const Matrix& inputs) const {
  Tape unused;
  return forward(inputs, unused);
}

Matrix Mlp::forward(const Matrix& inputs, Tape& tape) const {
  if (layers_.empty()) throw DomainError("mlp: no layers");
  if (inputs.cols() != input_dim()) {
    throw DimensionError("embed: input width " + std::to_string(inputs.cols()) +
                         " does not match network input " + std::to_string(input_dim()));
  }
  tape.inputs.clear();
  tape.pre.clear();
  Matrix x = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix pre = layer_forward(layers_[l], x);
    tape.inputs.push_back(std::move(x));
    x = pre;
    if (l + 1 < layers_.size()) relu_inplace(x);
    tape.pre.push_back(std::move(pre));
  }
  return x;
}

std::vector<DenseLayer> Mlp::backward(const Tape& tape, const Matrix& grad_output) const {
  std::vector<DenseLayer> grads(layers_.size());
  Matrix grad = grad_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) {
      const auto pre = tape.pre[l].data();
      auto g = grad.data();
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (pre[k] <= 0.0) g[k] = 0.0;
      }
    }
    const Matrix& input = tape.inputs[l];
    DenseLayer& gl = grads[l];
    gl.weight = matmul(grad.transposed(), input);
    gl.bias.assign(grad.cols(), 0.0);
    for (std::size_t i = 0; i < grad.rows(); ++i) axpy(1.0, grad.row(i), gl.bias);
    if (l > 0) grad = matmul(grad, layers_[l].weight);
  }
  return grads;
}

Matrix embed(const Mlp& net, const Matrix& inputs) { return net.forward(inputs); }

void TrainConfig::validate() const {
  if (!(lr_base > 0.0)) throw DomainError("train: lr_base must be positive");
  if (batch_size == 0) throw DomainError("train: batch_size must be positive");
  if (total_iters <= 0) throw DomainError("train: total_iters must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw DomainError("train: weight_decay must be non-negative");
  for (std::size_t k = 0; k < lr_decay_iters.size(); ++k) {
    if (lr_decay_iters[k] >= total_iters || lr_decay_iters[k] < 0 ||
        (k > 0 && lr_decay_iters[k] <= lr_decay_iters[k - 1])) {
      throw DomainError("train: lr_decay_iters must be strictly increasing and < total_iters");
    }
  }
}

double learning_rate_at(const TrainConfig& opt, std::int64_t iteration) {
  double lr = opt.lr_base;
  for (std::int64_t point : opt.lr_decay_iters) {
    if (iteration >= point) lr *= opt.lr_decay_factor;
  }
  return lr;
}

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const TrainConfig& opt, double lr, bool apply_weight_decay) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw DimensionError("sgd_step: parameter, gradient and velocity lengths differ (" +
                         std::to_string(param.size()) + ", " + std::to_string(grad.size()) +
                         ", " + std::to_string(velocity.size()) + ")");
  }
  const double decay = apply_weight_decay ? opt.weight_decay : 0.0;
  for (std::size_t k = 0; k < param.size(); ++k) {
    velocity[k] = opt.momentum * velocity[k] - lr * (grad[k] + decay * param[k]);
    param[k] += velocity[k];
  }
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "iter,loss,lr,lambda\n";
  for (std::size_t t = 0; t < loss.size(); ++t) {
    out << t << ',' << format_roundtrip(loss[t]) << ',' << format_roundtrip(learning_rate[t])
        << ',' << format_roundtrip(lambda[t]) << '\n';
  }
}

TrainHistory train(const LabeledDataset& dataset, const MlpConfig& mlp, const LossConfig& loss,
                   const TrainConfig& opt) {
  dataset.validate();
  mlp.validate();
  loss.validate();
  opt.validate();
  if (mlp.input_dim() != dataset.inputs.cols()) {
    throw DimensionError("train: network input " + std::to_string(mlp.input_dim()) +
                         " does not match dataset width " + std::to_string(dataset.inputs.cols()));
  }

  const Rng root(opt.seed);
  Rng init_rng = root.fork(1);
  Rng shuffle_rng = root.fork(2);

  TrainHistory history;
  Model& model = history.model;
  model.net = Mlp::he_normal(mlp, init_rng);
  const std::size_t c = static_cast<std::size_t>(dataset.class_count);
  const std::size_t d = mlp.embed_dim();
  model.head.weights = Matrix(c, d);
  // Unnormalized heads start small so initial logits are near uniform;
  // normalized heads only need a random direction.
  const bool renormalize = loss.variant != LossVariant::softmax && loss.weight_norm;
  const double head_std = renormalize ? 1.0 : kPlainHeadInitStd;
  for (double& v : model.head.weights.data()) v = init_rng.gaussian(0.0, head_std);
  if (renormalize) model.head.normalize_rows();

  std::vector<DenseLayer> velocity;
  for (const auto& layer : model.net.layers()) {
    velocity.push_back({Matrix(layer.weight.rows(), layer.weight.cols()),
                        std::vector<double>(layer.bias.size(), 0.0)});
  }
  Matrix head_velocity(c, d);

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::size_t cursor = n;
  auto record_accuracy = [&](std::int64_t t) {
    const Matrix features = embed(model.net, dataset.inputs);
    if (!features.all_finite()) throw DivergenceError(t);
    const std::vector<int> predicted = predict(features, model.head);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += predicted[i] == dataset.labels[i] ? 1 : 0;
    history.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
  };

  Mlp::Tape tape;
  for (std::int64_t t = 0; t < opt.total_iters; ++t) {
    if (cursor >= n) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle_rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    const std::size_t count = std::min(opt.batch_size, n - cursor);
    const std::span<const std::size_t> rows(order.data() + cursor, count);
    cursor += count;
    const LabeledDataset mini = dataset.subset(rows);

    Batch batch{model.net.forward(mini.inputs, tape), mini.labels};
    if (!batch.features.all_finite() || !model.head.weights.all_finite()) {
      throw DivergenceError(t);
    }
    const LossOutput out = loss_forward_backward(batch, model.head, loss, t);
    if (!std::isfinite(out.loss)) throw DivergenceError(t);

    const double lr = learning_rate_at(opt, t);
    history.loss.push_back(out.loss);
    history.learning_rate.push_back(lr);
    history.lambda.push_back(loss.variant == LossVariant::a_softmax
                                 ? lambda_at(loss.lambda_schedule, t)
                                 : 0.0);

    const std::vector<DenseLayer> grads = model.net.backward(tape, out.grad_features);
    auto& layers = model.net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      sgd_step(layers[l].weight.data(), grads[l].weight.data(), velocity[l].weight.data(), opt,
               lr, true);
      sgd_step(layers[l].bias, grads[l].bias, velocity[l].bias, opt, lr, false);
    }
    sgd_step(model.head.weights.data(), out.grad_weights.data(), head_velocity.data(), opt, lr,
             true);
    if (!model.head.weights.all_finite() ||
        !std::all_of(layers.begin(), layers.end(), [](const DenseLayer& layer) {
          return layer.weight.all_finite() &&
                 std::all_of(layer.bias.begin(), layer.bias.end(),
                             [](double b) { return std::isfinite(b); });
        })) {
      throw DivergenceError(t);
    }
    if (renormalize) model.head.normalize_rows();

    if (cursor >= n || t + 1 == opt.total_iters) record_accuracy(t);
  }
  return history;
}

void save_checkpoint(const Model& model, std::ostream& out) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_u32(out, kCheckpointVersion);
  const auto& layers = model.net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    put_tensor(out, prefix + ".weight", layers[l].weight.rows(), layers[l].weight.cols(),
               layers[l].weight.data());
    put_tensor(out, prefix + ".bias", 1, layers[l].bias.size(), layers[l].bias);
  }
  put_tensor(out, "head.weight", model.head.weights.rows(), model.head.weights.cols(),
             model.head.weights.data());
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  save_checkpoint(model, out);
  if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

Model load_checkpoint(std::istream& in) {
  std::array<unsigned char, 4> magic{};
  if (!read_exact(in, magic) ||
      std::memcmp(magic.data(), kCheckpointMagic.data(), magic.size()) != 0) {
    throw IoError("checkpoint: bad magic");
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }

  std::map<std::string, Matrix> tensors;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t name_len = get_u32(in, "tensor name length");
    if (name_len > 4096) throw IoError("checkpoint: implausible tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) {
      throw IoError("checkpoint: truncated tensor name");
    }
    const std::uint32_t rows = get_u32(in, "tensor rows");
    const std::uint32_t cols = get_u32(in, "tensor cols");
    if (std::uint64_t{rows} * cols > (std::uint64_t{1} << 32)) {
      throw IoError("checkpoint: implausible tensor shape for " + name);
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) v = get_f64(in);
    if (!tensors.emplace(name, std::move(m)).second) {
      throw IoError("checkpoint: duplicate tensor " + name);
    }
  }

  Model model;
  auto head = tensors.find("head.weight");
  if (head == tensors.end()) throw IoError("checkpoint: missing head.weight");
  model.head.weights = head->second;
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0;; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    auto w = tensors.find(prefix + ".weight");
    auto b = tensors.find(prefix + ".bias");
    if (w == tensors.end() && b == tensors.end()) break;
    if (w == tensors.end() || b == tensors.end() || b->second.rows() != 1) {
      throw IoError("checkpoint: incomplete tensors for " + prefix);
    }
    layers.push_back({w->second, std::vector<double>(b->second.data().begin(),
                                                     b->second.data().end())});
  }
  if (layers.empty()) throw IoError("checkpoint: no network layers");
  if (tensors.size() != 2 * layers.size() + 1) throw IoError("checkpoint: unexpected tensors");
  try {
    model.net = Mlp(std::move(layers));
  } catch (const DimensionError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  if (model.head.embed_dim() != model.net.embed_dim()) {
    throw IoError("checkpoint: head width does not match network output");
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace amlab
