#include <benchmark/benchmark.h>

#include "s2x/fft.hpp"
#include "s2x/ops.hpp"
#include "s2x/tensor.hpp"

using namespace s2x;

static void BM_matmul(benchmark::State& state) {
  int64_t n = state.range(0);
  Rng rng(1);
  Tensor a = Tensor::rand_uniform({n, n}, rng, -1, 1);
  Tensor b = Tensor::rand_uniform({n, n}, rng, -1, 1);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_matmul_backward(benchmark::State& state) {
  int64_t n = state.range(0);
  Rng rng(2);
  for (auto _ : state) {
    Tensor a = Tensor::rand_uniform({n, n}, rng, -1, 1).set_requires_grad(true);
    Tensor b = Tensor::rand_uniform({n, n}, rng, -1, 1).set_requires_grad(true);
    Tensor loss = sum_all(matmul(a, b));
    backward(loss);
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_matmul_backward)->Arg(32)->Arg(64);

static void BM_softmax(benchmark::State& state) {
  Rng rng(3);
  Tensor x = Tensor::rand_uniform({64, 9, 9}, rng, -4, 4);
  for (auto _ : state) {
    Tensor y = softmax(x, -1);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_softmax);

static void BM_rfft_magnitude(benchmark::State& state) {
  int64_t c = state.range(0);
  Rng rng(4);
  Tensor x = Tensor::rand_uniform({64, c}, rng, -1, 1);
  for (auto _ : state) {
    Tensor m = rfft_magnitude(x);
    benchmark::DoNotOptimize(m.values().data());
  }
}
BENCHMARK(BM_rfft_magnitude)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
