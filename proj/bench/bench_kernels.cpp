// Parallel kernels against the serial reference implementations, plus one
// full training step of the standard model.

#include <benchmark/benchmark.h>

#include "saan/kernels.hpp"
#include "saan/losses.hpp"
#include "saan/network.hpp"
#include "saan/reference.hpp"
#include "saan/rng.hpp"

using namespace saan;

namespace {

Tensor random_tensor(Shape dims, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(dims));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Args: channels in, channels out, kernel, spatial side.
template <bool Reference>
void BM_Conv2d(benchmark::State& state) {
  const auto cin = static_cast<std::size_t>(state.range(0)), cout = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2)), side = static_cast<std::size_t>(state.range(3));
  const Tensor x = random_tensor({4, cin, side, side}, 1);
  const Tensor w = random_tensor({cout, cin, k, k}, 2);
  const Tensor b = random_tensor({cout}, 3);
  for (auto _ : state) {
    if constexpr (Reference) benchmark::DoNotOptimize(reference::conv2d(x, w, b));
    else benchmark::DoNotOptimize(conv2d(x, w, b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(4 * cout * cin * k * k * side * side));
}
BENCHMARK(BM_Conv2d<false>)->Args({1, 16, 9, 64})->Args({16, 20, 7, 32})->Args({48, 64, 3, 16});
BENCHMARK(BM_Conv2d<true>)->Args({1, 16, 9, 64})->Args({16, 20, 7, 32})->Args({48, 64, 3, 16});

template <bool Reference>
void BM_Deconv(benchmark::State& state) {
  const Tensor x = random_tensor({4, 32, 16, 16}, 1);
  const Tensor w = random_tensor({32, 16, 4, 4}, 2);
  const Tensor b = random_tensor({16}, 3);
  for (auto _ : state) {
    if constexpr (Reference) benchmark::DoNotOptimize(reference::conv2d_transpose(x, w, b));
    else benchmark::DoNotOptimize(conv2d_transpose(x, w, b));
  }
}
BENCHMARK(BM_Deconv<false>);
BENCHMARK(BM_Deconv<true>);

template <bool Reference>
void BM_MaxPool(benchmark::State& state) {
  const Tensor x = random_tensor({4, 16, 64, 64}, 1);
  for (auto _ : state) {
    if constexpr (Reference) benchmark::DoNotOptimize(reference::maxpool2(x));
    else benchmark::DoNotOptimize(maxpool2(x));
  }
}
BENCHMARK(BM_MaxPool<false>);
BENCHMARK(BM_MaxPool<true>);

template <bool Reference>
void BM_BoxSum(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const TensorD map = random_tensor({side, side}, 1).cast<double>();
  for (auto _ : state) {
    if constexpr (Reference) benchmark::DoNotOptimize(reference::box_sum(map, 32));
    else benchmark::DoNotOptimize(box_sum(map, 32));
  }
}
BENCHMARK(BM_BoxSum<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_BoxSum<true>)->Arg(64)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  const NetworkConfig config = NetworkConfig::standard();
  const ModelParams<float> params = init_params(config, 1);
  const Tensor image = random_tensor({4, 1, 64, 64}, 5);
  LossTargets<float> targets;
  targets.density = Tensor({4, 1, 64, 64});
  targets.global_classes = {1, 2, 3, 1};
  targets.local_maps.assign(4, LocalScaleMap{16, 16, std::vector<std::uint8_t>(256, 2)});
  for (auto _ : state) {
    TapeHandle<float> tape;
    auto out = model_forward(image, params, config, {}, &tape);
    auto loss = compute_loss(out, targets, LossWeights{});
    benchmark::DoNotOptimize(model_backward(tape, params, config, loss.grads));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
