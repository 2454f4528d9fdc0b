#include <benchmark/benchmark.h>

#include "biofm/evalsuite.hpp"
#include "biofm/objective.hpp"
#include "biofm/ops.hpp"
#include "biofm/pretrain.hpp"

using namespace biofm;

namespace {

Tensor<float> randn(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(std::move(shape));
  for (float& v : t.storage()) v = static_cast<float>(normal(rng));
  return t;
}

void BM_Conv1dForwardBackward(benchmark::State& state) {
  const auto C = static_cast<std::size_t>(state.range(0));
  const auto groups = static_cast<int>(state.range(1));
  auto x = make_var(randn({32, C, 256}, 1), true);
  auto w = make_var(randn({C, C / groups, 5}, 2), true);
  auto b = make_var(randn({C}, 3), true);
  for (auto _ : state) {
    Graph<float> g;
    auto y = ops::conv1d(g, x, w, b, 1, 2, groups);
    g.backward(ops::sum(g, y));
    benchmark::DoNotOptimize(w->grad.ptr());
  }
}
BENCHMARK(BM_Conv1dForwardBackward)->Args({32, 1})->Args({96, 96})->Args({64, 1})->Unit(benchmark::kMillisecond);

void BM_CombinedLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto h1 = make_var(randn({n, 128}, 4), true), h2 = make_var(randn({n, 128}, 5), true);
  auto m1 = make_var(randn({n, 128}, 6)), m2 = make_var(randn({n, 128}, 7));
  for (auto _ : state) {
    Graph<float> g;
    auto l = loss::combined(g, h1, h2, m1, m2, LossConfig{});
    g.backward(l);
    benchmark::DoNotOptimize(h1->grad.ptr());
  }
}
BENCHMARK(BM_CombinedLoss)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_TrainStepDesk(benchmark::State& state) {
  PretrainSetup setup;
  setup.encoder = EncoderConfig::desk(4);
  setup.train.batch_pairs = 64;
  auto st = init_state(setup);
  PairBatch batch;
  batch.x1 = randn({64, 4, 512}, 8);
  batch.x2 = randn({64, 4, 512}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(st, setup, batch, 1e-3));
}
BENCHMARK(BM_TrainStepDesk)->Unit(benchmark::kMillisecond)->Iterations(5);

void BM_SmoothEffectiveRank(benchmark::State& state) {
  Rng rng(10);
  Eigen::MatrixXd H(64, 64);
  for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(smooth_effective_rank(H));
}
BENCHMARK(BM_SmoothEffectiveRank)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
