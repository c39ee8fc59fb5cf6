#include <benchmark/benchmark.h>

#include <vector>

#include "delnet/backbone.hpp"
#include "delnet/experts.hpp"
#include "delnet/losses.hpp"
#include "delnet/metrics.hpp"
#include "delnet/ops.hpp"
#include "delnet/optim.hpp"
#include "delnet/random.hpp"
#include "delnet/synth.hpp"
#include "delnet/valve.hpp"

using namespace delnet;

namespace {

Tensor filled(Shape shape, std::uint64_t seed, bool grad) {
  CounterRng rng(seed, 0);
  std::vector<double> d(shape_numel(shape));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(d), grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = filled({2, c, 32, 32}, 1, false);
  auto k = filled({c, c, 3, 3}, 2, false);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, Tensor{}, Padding::Same));
}
BENCHMARK(BM_Conv2dForward)->Arg(3)->Arg(16);

void BM_Conv2dBackward(benchmark::State& state) {
  auto x = filled({2, 16, 32, 32}, 1, true);
  auto k = filled({16, 16, 3, 3}, 2, true);
  for (auto _ : state) {
    auto loss = sum(conv2d(x, k, Tensor{}, Padding::Same));
    loss.backward();
    x.zero_grad();
    k.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward);

// One optimisation step of the restoration path with a single trainable expert.
void BM_TrainStep(benchmark::State& state) {
  MiniBackbone backbone(16, 3);
  LibraryConfig lc;
  ExpertLibrary library(lc, 4);
  const auto active = library.handle_task(TaskDecision{}, 0);
  std::vector<Tensor> params = backbone.parameters();
  for (auto& p : library.at(active.experts[0]).params.parameters()) params.push_back(p);
  Adam opt(params, 1'000'000);
  DegradationSpec spec;
  spec.family = Family::Rain;
  std::vector<Tensor> in, gt;
  for (std::uint64_t i = 0; i < 2; ++i) {
    const auto s = make_sample(spec, i, 32);
    in.push_back(s.degraded);
    gt.push_back(s.clean);
  }
  const auto x = stack_images(in), y = stack_images(gt);
  const std::vector<double> w{1.0};
  for (auto _ : state) {
    auto pred = backbone.decode(library.fuse(active.experts, w, backbone.encode(x)), x);
    auto loss = reconstruction_loss(pred, y);
    loss.backward();
    opt.step();
    opt.zero_grad();
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_ExtractTaskVector(benchmark::State& state) {
  const auto features = filled({2, 16, 32, 32}, 5, false);
  for (auto _ : state) benchmark::DoNotOptimize(extract_task_vector(features.data()));
}
BENCHMARK(BM_ExtractTaskVector);

void BM_Ssim(benchmark::State& state) {
  const auto a = generate_clean(1, 0, 32), b = generate_clean(1, 1, 32);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
