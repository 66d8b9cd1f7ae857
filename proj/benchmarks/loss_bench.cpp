// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "amlab/losses.hpp"
#include "amlab/matrix.hpp"
#include "amlab/rng.hpp"
#include "amlab/trainer.hpp"

namespace {

amlab::Matrix gaussian_matrix(std::size_t rows, std::size_t cols, amlab::Rng& rng) {
  amlab::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.gaussian(0.0, 1.0);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  amlab::Rng rng(1);
  const amlab::Matrix a = gaussian_matrix(n, n, rng);
  const amlab::Matrix b = gaussian_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(amlab::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

// Batch 64, 10 classes, 3-D embedding: one toy training step's loss.
void BM_LossForwardBackward(benchmark::State& state) {
  const auto variant = static_cast<amlab::LossVariant>(state.range(0));
  const amlab::LossConfig cfg = variant == amlab::LossVariant::softmax    ? amlab::LossConfig::softmax()
                                : variant == amlab::LossVariant::normface ? amlab::LossConfig::normface()
                                : variant == amlab::LossVariant::a_softmax
                                    ? amlab::LossConfig::a_softmax()
                                    : amlab::LossConfig::am_softmax();
  amlab::Rng rng(2);
  const std::size_t n = 64, c = 10, d = static_cast<std::size_t>(state.range(1));
  amlab::Batch batch{gaussian_matrix(n, d, rng), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) batch.labels[i] = static_cast<int>(i % c);
  const amlab::ClassifierHead head{gaussian_matrix(c, d, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(amlab::loss_forward_backward(batch, head, cfg));
  state.SetLabel(std::string(amlab::to_string(variant)));
}
BENCHMARK(BM_LossForwardBackward)->ArgsProduct({{0, 1, 2, 3}, {3, 128}});

void BM_MlpForwardBackward(benchmark::State& state) {
  amlab::Rng rng(3);
  const amlab::Mlp net = amlab::Mlp::he_normal(amlab::MlpConfig{{32, 64, 64, 3}}, rng);
  const amlab::Matrix x = gaussian_matrix(64, 32, rng);
  const amlab::Matrix grad = gaussian_matrix(64, 3, rng);
  amlab::Mlp::Tape tape;
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(x, tape));
    benchmark::DoNotOptimize(net.backward(tape, grad));
  }
}
BENCHMARK(BM_MlpForwardBackward);

}  // namespace
