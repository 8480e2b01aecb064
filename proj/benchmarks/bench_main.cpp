#include <benchmark/benchmark.h>

#include "camalign/eval.hpp"
#include "camalign/experiments.hpp"

namespace camalign {
namespace {

Tensor3 random_tensor(int h, int w, int c, Rng& rng) {
  Tensor3 t(h, w, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

void BM_ConvForward(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  Rng rng(1);
  Conv2d conv(channels, channels, 2, "conv");
  conv.init_he(rng);
  const Tensor3 x = random_tensor(32, 16, channels, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nullptr));
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(32)->Arg(64);

void BM_ConvBackward(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  Rng rng(2);
  Conv2d conv(channels, channels, 2, "conv");
  conv.init_he(rng);
  const Tensor3 x = random_tensor(32, 16, channels, rng);
  ConvCache cache;
  const Tensor3 y = conv.forward(x, &cache);
  const Tensor3 g = random_tensor(y.height(), y.width(), y.channels(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(g, cache, true));
}
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(32)->Arg(64);

void BM_BackboneTracklet(benchmark::State& state) {
  Rng rng(3);
  Backbone backbone(desk_train_config().backbone, rng);
  std::vector<Image> frames;
  for (int t = 0; t < 8; ++t) frames.push_back(random_tensor(64, 32, 3, rng));
  std::vector<const Image*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  for (auto _ : state) benchmark::DoNotOptimize(backbone.extract_feature_map(ptrs, nullptr));
}
BENCHMARK(BM_BackboneTracklet);

void BM_ClusterParts(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Rng rng(4);
  const FeatureMap fm = random_tensor(8, 4, 32, rng);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(build_part_masks(fm, k, MaskMode::adaptive, ++seed));
}
BENCHMARK(BM_ClusterParts)->Arg(1)->Arg(3)->Arg(5);

void BM_RankQueries(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(5);
  LabeledEmbeddings e;
  e.n_cameras = 4;
  for (int i = 0; i < n; ++i) {
    Embedding v(32);
    for (double& x : v) x = rng.normal();
    e.embeddings.push_back(std::move(v));
    e.cameras.push_back(i % 4);
    e.identities.push_back(std::to_string(i / 3));
  }
  for (auto _ : state) benchmark::DoNotOptimize(rank_queries(e, e));
}
BENCHMARK(BM_RankQueries)->Arg(100)->Arg(400);

void BM_TrainStep(benchmark::State& state) {
  SynthConfig s;
  s.n_identities = 12;
  Dataset d = generate_synthetic(s);
  assign_pseudo_labels(d.tracklets, 1, false);
  TrainConfig c = desk_train_config();
  c.steps = 1;
  c.adversarial.variant = static_cast<Variant>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train(d.tracklets, c));
  state.SetLabel(to_string(c.adversarial.variant));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(Variant::none))
    ->Arg(static_cast<int>(Variant::single))
    ->Arg(static_cast<int>(Variant::single_pam))
    ->Arg(static_cast<int>(Variant::pairwise))
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace camalign

BENCHMARK_MAIN();
