#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>
#include <vector>

#include "sopt/kernels.hpp"

// Parallel kernels against the serial reference on SmallNet-8 layer shapes.
// Arguments: batch size, then the layer (0, 1, 2 for the three conv blocks).

namespace k = sopt::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

k::ConvGeometry conv_layer(std::size_t batch, std::size_t layer) {
  static const std::size_t in[] = {3, 16, 32}, out[] = {16, 32, 64}, size[] = {32, 16, 8};
  return {batch, in[layer], size[layer], size[layer], out[layer], 3, 1, 1};
}

struct ConvData {
  k::ConvGeometry g;
  std::vector<float> x, w, b, y, dy, dx, dw, db;
  explicit ConvData(const k::ConvGeometry& geo) : g(geo) {
    const std::size_t out = g.batch * g.out_channels * g.out_height() * g.out_width();
    x = random_vec(g.batch * g.in_channels * g.height * g.width, 1);
    w = random_vec(g.out_channels * g.patch_size(), 2);
    b = random_vec(g.out_channels, 3);
    dy = random_vec(out, 4);
    y.resize(out);
    dx.resize(x.size());
    dw.resize(w.size());
    db.resize(b.size());
  }
};

template <bool Parallel>
void conv_forward(benchmark::State& state) {
  ConvData d(conv_layer(std::size_t(state.range(0)), std::size_t(state.range(1))));
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward(d.g, d.x, d.w, d.b, d.y);
    else
      k::reference::conv2d_forward(d.g, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
  state.counters["threads"] = Parallel ? omp_get_max_threads() : 1;
}

template <bool Parallel>
void conv_backward(benchmark::State& state) {
  ConvData d(conv_layer(std::size_t(state.range(0)), std::size_t(state.range(1))));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_backward_input(d.g, d.w, d.dy, d.dx);
      k::conv2d_backward_params(d.g, d.x, d.dy, d.dw, d.db);
    } else {
      k::reference::conv2d_backward_input(d.g, d.w, d.dy, d.dx);
      k::reference::conv2d_backward_params(d.g, d.x, d.dy, d.dw, d.db);
    }
    benchmark::DoNotOptimize(d.dx.data());
    benchmark::DoNotOptimize(d.dw.data());
  }
  state.counters["threads"] = Parallel ? omp_get_max_threads() : 1;
}

template <bool Parallel>
void pool_forward(benchmark::State& state) {
  const k::PoolGeometry g{std::size_t(state.range(0)), 16, 32, 32};
  const auto x = random_vec(g.batch * g.channels * g.height * g.width, 5);
  std::vector<float> y(x.size() / 4);
  std::vector<std::uint32_t> arg(y.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::maxpool2_forward(g, x, y, arg);
    else
      k::reference::maxpool2_forward(g, x, y, arg);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void affine_forward(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0)), d = 1024, m = 8;
  const auto x = random_vec(n * d, 6), w = random_vec(d * m, 7), b = random_vec(m, 8);
  std::vector<float> y(n * m);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::affine_forward(n, d, m, x, w, b, y);
    else
      k::reference::affine_forward(n, d, m, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  for (long batch : {1, 32})
    for (long layer : {0, 1, 2}) b->Args({batch, layer});
}

}  // namespace

BENCHMARK(conv_forward<false>)->Name("conv_forward/reference")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_forward<true>)->Name("conv_forward/parallel")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_backward<false>)->Name("conv_backward/reference")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_backward<true>)->Name("conv_backward/parallel")->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(pool_forward<false>)->Name("maxpool2/reference")->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(pool_forward<true>)->Name("maxpool2/parallel")->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(affine_forward<false>)->Name("affine/reference")->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(affine_forward<true>)->Name("affine/parallel")->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
