#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include <random>

#include "canvasinfill/contrastive.hpp"
#include "canvasinfill/evaluation.hpp"
#include "canvasinfill/generator.hpp"
#include "canvasinfill/losses.hpp"
#include "canvasinfill/mask_engine.hpp"

using namespace canvasinfill;

static void BM_IrregularMask(benchmark::State& state) {
  MaskSpec spec;
  std::mt19937_64 rng(1);
  const auto size = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(gen_irregular(spec, size, size, rng));
}
BENCHMARK(BM_IrregularMask)->Arg(64)->Arg(256);

static void BM_RectangularMask(benchmark::State& state) {
  MaskSpec spec;
  std::mt19937_64 rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(gen_rectangular(spec, 256, 256, rng));
}
BENCHMARK(BM_RectangularMask);

static void BM_InfoNce(benchmark::State& state) {
  torch::manual_seed(0);
  const int64_t d = 128;
  KeyQueue queue(state.range(0), d);
  auto keys = torch::randn({state.range(0), d});
  queue.enqueue(keys / keys.norm(2, 1, true));
  auto q = torch::randn({16, d});
  auto k = torch::randn({16, d});
  q = q / q.norm(2, 1, true);
  k = k / k.norm(2, 1, true);
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(info_nce_batch(q, k, queue.keys(), 0.07).loss);
}
BENCHMARK(BM_InfoNce)->Arg(256)->Arg(4096);

static void BM_GeneratorForward(benchmark::State& state) {
  torch::manual_seed(0);
  GeneratorOptions opts;
  opts.use_daf = state.range(1) != 0;
  Generator g(opts);
  const auto size = state.range(0);
  auto input = torch::rand({1, 4, size, size});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(g->forward(input).at(1));
}
BENCHMARK(BM_GeneratorForward)->Args({64, 1})->Args({64, 0})->Args({128, 1})->Unit(benchmark::kMillisecond);

static void BM_Ssim(benchmark::State& state) {
  torch::manual_seed(0);
  auto a = torch::rand({8, 3, 64, 64});
  auto b = torch::rand({8, 3, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

static void BM_StyleLoss(benchmark::State& state) {
  torch::manual_seed(0);
  FeatureExtractor phi;
  auto a = torch::rand({4, 3, 64, 64});
  auto b = torch::rand({4, 3, 64, 64});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(style_loss(a, b, phi));
}
BENCHMARK(BM_StyleLoss)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
