#include <benchmark/benchmark.h>

#include <random>

#include "ileumnet/kernels.hpp"
#include "ileumnet/model.hpp"
#include "ileumnet/ops.hpp"

using namespace ileumnet;

namespace {

Tensor<float> uniform(const Shape& shape, std::uint64_t seed) {
  Tensor<float> t(shape);
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// args: channels in/out, spatial extent, stride
void BM_Conv3d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto stride = static_cast<std::size_t>(state.range(2));
  const auto x = uniform({c, n, n, n}, 1);
  const auto w = uniform({c, c, 3, 3, 3}, 2);
  const ConvSpec spec{c, c, 3, stride, PaddingMode::kMirror};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv3d(x, w, static_cast<const Tensor<float>*>(nullptr), spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_Conv3d)->Args({16, 16, 1})->Args({32, 16, 1})->Args({32, 16, 2})->Args({64, 12, 1})->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto config = state.range(0) ? ResNetConfig::paper() : ResNetConfig::desk();
  Rng rng(3);
  const auto params = init_params<float>(config, rng);
  const auto& win = config.input_window;
  const auto x = uniform({1, win[0], win[1], win[2]}, 4);
  for (auto _ : state) {
    Tape<float> tape;
    Rng unused(0);
    const auto vars = bind_params(tape, params, false);
    benchmark::DoNotOptimize(forward(tape, vars, tape.constant(x), config, false, unused).logits_combined);
  }
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto config = ResNetConfig::desk();
  Rng rng(5);
  const auto params = init_params<float>(config, rng);
  const auto& win = config.input_window;
  const auto x = uniform({1, win[0], win[1], win[2]}, 6);
  for (auto _ : state) {
    Tape<float> tape;
    Rng drop(7);
    const auto vars = bind_params(tape, params, true);
    const auto pred = forward(tape, vars, tape.constant(x), config, true, drop);
    tape.backward(ops::softmax_cross_entropy(tape, pred.logits_combined, 1));
    benchmark::DoNotOptimize(tape.grad(vars.front()));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
