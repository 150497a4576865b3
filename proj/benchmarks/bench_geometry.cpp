#include <benchmark/benchmark.h>

#include "mpt/dataset.hpp"
#include "mpt/geometry.hpp"
#include "mpt/masking.hpp"

using namespace mpt;

namespace {

PointCloud make_cloud(int n) {
  Rng rng(0xBE7C);
  return gen_shape(ShapeKind::torus, n, 0.01, rng);
}

void BM_fps(benchmark::State& state) {
  const auto cloud = make_cloud(int(state.range(0)));
  const int count = int(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(fps(cloud, count, 0));
}
BENCHMARK(BM_fps)->Args({256, 16})->Args({1024, 64})->Args({4096, 64});

void BM_knn(benchmark::State& state) {
  const auto cloud = make_cloud(int(state.range(0)));
  const int k = int(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(knn(cloud, cloud[0], k));
}
BENCHMARK(BM_knn)->Args({256, 32})->Args({1024, 32})->Args({4096, 32});

void BM_chamfer(benchmark::State& state) {
  const auto a = make_cloud(int(state.range(0)));
  const auto b = make_cloud(int(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_l2(a, b));
}
BENCHMARK(BM_chamfer)->Arg(256)->Arg(1024);

void BM_sample_queries(benchmark::State& state) {
  const auto cloud = make_cloud(256);
  const double gamma = compute_gamma(cloud, 16);
  Rng rng(0x5A);
  for (auto _ : state) benchmark::DoNotOptimize(sample_queries(cloud, cloud, int(state.range(0)), gamma, rng));
}
BENCHMARK(BM_sample_queries)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
