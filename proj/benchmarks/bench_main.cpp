#include <benchmark/benchmark.h>

#include "cpc/classifiers.hpp"
#include "cpc/cpc.hpp"
#include "cpc/dataset.hpp"
#include "cpc/mlp.hpp"
#include "cpc/preprocess.hpp"

namespace {

using namespace cpc;

LabeledDataset fixture(int per_regime, int dim = 8) {
  return generate_two_regime(TwoRegimeSpec{per_regime, per_regime, 4, dim, 6.0, 0.8, 1});
}

void BM_Neighbors(benchmark::State& state) {
  const auto ds = fixture(static_cast<int>(state.range(0)) / 2);
  const auto query = ds.row(0);
  for (auto _ : state) benchmark::DoNotOptimize(neighbors(ds, query, 25));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Neighbors)->Arg(400)->Arg(4000);

void BM_FitSoftmax(benchmark::State& state) {
  const auto ds = fixture(200);
  ClassifierSpec spec;
  spec.sgd.epochs = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit(spec, ds));
}
BENCHMARK(BM_FitSoftmax)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_FitForest(benchmark::State& state) {
  const auto ds = fixture(200);
  ClassifierSpec spec;
  spec.kind = ClassifierKind::random_forest;
  spec.forest.trees = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit(spec, ds));
}
BENCHMARK(BM_FitForest)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_MlpBackward(benchmark::State& state) {
  const auto ds = fixture(64);
  const auto m = MlpModel::create(parse_architecture("in:8 concat:32 concat:32 fc:32 head:4"), 1);
  for (auto _ : state) benchmark::DoNotOptimize(backward(m, ds.features(), ds.labels()));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(ds.size()));
}
BENCHMARK(BM_MlpBackward);

void BM_FitZca(benchmark::State& state) {
  const auto ds = fixture(250, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_zca(ds));
}
BENCHMARK(BM_FitZca)->Arg(8)->Arg(64);

void BM_CpcPredict(benchmark::State& state) {
  const auto train = fixture(200);
  const auto test = fixture(50);
  CpcConfig cfg;
  cfg.base.sgd.epochs = 20;
  cfg.expert = cfg.base;
  const auto model = train_cpc(train, cfg);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cpc_predict(model, test.row(i)));
    i = (i + 1) % test.size();
  }
}
BENCHMARK(BM_CpcPredict)->Unit(benchmark::kMicrosecond);

void BM_TrainBaseEnsemble(benchmark::State& state) {
  const auto ds = fixture(200);
  ClassifierSpec spec;
  spec.sgd.epochs = 20;
  for (auto _ : state) benchmark::DoNotOptimize(train_base_ensemble(ds, 5, 3, spec, 1));
}
BENCHMARK(BM_TrainBaseEnsemble)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
