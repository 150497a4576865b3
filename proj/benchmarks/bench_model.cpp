#include <benchmark/benchmark.h>

#include "mpt/dataset.hpp"
#include "mpt/model.hpp"

using namespace mpt;

namespace {

ModelConfig desk_model() {
  ModelConfig cfg;
  cfg.dropout_p = 0.0;
  cfg.droppath_p = 0.0;
  return cfg;
}

PointCloud make_cloud(int n) {
  Rng rng(0xBE7D);
  return gen_shape(ShapeKind::cylinder, n, 0.01, rng);
}

void BM_pretrain_forward(benchmark::State& state) {
  MptModel<float> model(desk_model(), 1);
  const auto cloud = make_cloud(256);
  MaskConfig mask;
  mask.n_queries = int(state.range(0));
  LossConfig loss;
  Rng rng(7);
  for (auto _ : state) benchmark::DoNotOptimize(model.pretrain_forward(cloud, mask, loss, rng, false));
}
BENCHMARK(BM_pretrain_forward)->Arg(64)->Arg(256);

void BM_pretrain_step(benchmark::State& state) {
  MptModel<float> model(desk_model(), 1);
  AdamW<float> opt(0.9, 0.999, 1e-8, 0.05);
  register_params(opt, model.params());
  const auto cloud = make_cloud(256);
  MaskConfig mask;
  LossConfig loss;
  Rng rng(7);
  for (auto _ : state) {
    opt.zero_grad();
    auto res = model.pretrain_forward(cloud, mask, loss, rng, true);
    backward(res.loss);
    opt.step(1e-3);
  }
}
BENCHMARK(BM_pretrain_step);

void BM_classification_feature(benchmark::State& state) {
  MptModel<float> model(desk_model(), 1);
  const auto cloud = make_cloud(256);
  Rng rng(7);
  for (auto _ : state) benchmark::DoNotOptimize(model.classification_feature(cloud, false, rng));
}
BENCHMARK(BM_classification_feature);

void BM_decode_queries(benchmark::State& state) {
  MptModel<float> model(desk_model(), 1);
  const auto cloud = make_cloud(256);
  auto ps = patchify(cloud, model.config().patch_count, model.config().patch_size);
  Rng rng(7);
  auto enc = model.encode(model.embed_groups(ps.groups), model.pos_embed_points(ps.centers), false, rng);
  Rng qr(9);
  PointCloud queries;
  for (int i = 0; i < int(state.range(0)); ++i)
    queries.push_back({qr.uniform(-1, 1), qr.uniform(-1, 1), qr.uniform(-1, 1)});
  for (auto _ : state) benchmark::DoNotOptimize(model.decode_logits(enc, queries, false, rng));
}
BENCHMARK(BM_decode_queries)->Arg(64)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
