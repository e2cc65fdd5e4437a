// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "softtpr/dataset.hpp"
#include "softtpr/metrics.hpp"
#include "softtpr/model.hpp"
#include "softtpr/soft_tpr.hpp"

using namespace softtpr;

namespace {

void BM_Compose(benchmark::State& state) {
  SeededRng rng(0);
  const RoleSpace roles = RoleSpace::semi_orthogonal(4, 3, rng);
  const FillerCodebook book = FillerCodebook::random_normal(8, 16, 1.0, rng);
  const BindingSet m{{3, 7, 11}};
  for (auto _ : state) benchmark::DoNotOptimize(compose(roles, book, m));
}
BENCHMARK(BM_Compose);

void BM_QuantizeGreedy(benchmark::State& state) {
  SeededRng rng(1);
  const auto n_f = static_cast<std::size_t>(state.range(0));
  const RoleSpace roles = RoleSpace::semi_orthogonal(4, 3, rng);
  const FillerCodebook book = FillerCodebook::random_normal(8, n_f, 1.0, rng);
  Vector z(32);
  for (auto& v : z) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(quantize_greedy(roles, book, SoftTpr{z}));
}
BENCHMARK(BM_QuantizeGreedy)->Arg(4)->Arg(16)->Arg(64);

void BM_QuantizeBruteForce(benchmark::State& state) {
  SeededRng rng(2);
  const auto n_f = static_cast<std::size_t>(state.range(0));
  const RoleSpace roles = RoleSpace::semi_orthogonal(4, 3, rng);
  const FillerCodebook book = FillerCodebook::random_normal(8, n_f, 1.0, rng);
  Vector z(32);
  for (auto& v : z) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(quantize_global_bruteforce(roles, book, SoftTpr{z}));
}
BENCHMARK(BM_QuantizeBruteForce)->Arg(4)->Arg(8)->Arg(16);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig c;
  SoftTprAutoencoder model(c);
  FactorSpec spec;
  const Renderer renderer(spec);
  SeededRng rng(3);
  const PairBatch batch = pair_source(renderer)(32, rng);
  auto params = model.parameters();
  AdamOptions adam;
  adam.lr = 1e-3;
  for (auto _ : state) {
    Tape tape;
    const auto out = model.loss_weakly_supervised(tape, batch.x, batch.x_prime, batch.differing);
    tape.backward(out.loss);
    adam_step(params, adam);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMicrosecond);

void BM_EvaluateMetrics(benchmark::State& state) {
  ModelConfig c;
  const SoftTprAutoencoder model(c);
  const Renderer renderer{FactorSpec{}};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_metrics(model, renderer));
}
BENCHMARK(BM_EvaluateMetrics)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
