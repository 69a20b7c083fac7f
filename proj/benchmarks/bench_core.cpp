#include <benchmark/benchmark.h>

#include "fedhpo/federation.hpp"
#include "fedhpo/gp.hpp"
#include "fedhpo/model.hpp"
#include "fedhpo/partition.hpp"

using namespace fedhpo;

namespace {

Dataset bench_dataset(int n, int dim, int classes) {
  SyntheticSpec spec;
  spec.num_classes = classes;
  spec.feature_dim = dim;
  spec.samples_per_class_per_client = n / classes;
  spec.client_count = 1;
  spec.seed = 1;
  return generate_synthetic_industrial(spec);
}

}  // namespace

static void BM_ClientUpdateEpoch(benchmark::State& state) {
  const ModelSpec spec = industrial_spec(24, 6);
  const ParamVector w0 = init_params(spec, 1);
  const Dataset data = bench_dataset(3072, 24, 6);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 1;
  cfg.batch_size = 128;
  cfg.seed = 2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(client_update(0, w0, cfg, spec, data));
  }
  state.SetItemsProcessed(state.iterations() * data.size());
}
BENCHMARK(BM_ClientUpdateEpoch)->Unit(benchmark::kMillisecond);

static void BM_Gradient128(benchmark::State& state) {
  const ModelSpec spec = industrial_spec(24, 6);
  const ParamVector w = init_params(spec, 3);
  Dataset data = bench_dataset(128, 24, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gradient(spec, w, data));
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Gradient128)->Unit(benchmark::kMicrosecond);

static void BM_Aggregate(benchmark::State& state) {
  const auto clients = static_cast<int>(state.range(0));
  std::vector<std::pair<int, ParamVector>> updates;
  std::map<int, Eigen::Index> sizes;
  for (int k = 0; k < clients; ++k) {
    updates.emplace_back(k, ParamVector::Random(1990));
    sizes[k] = 2048;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(aggregate(updates, sizes));
  }
}
BENCHMARK(BM_Aggregate)->Arg(10)->Arg(100);

static void BM_GpPosterior(benchmark::State& state) {
  GPState gp;
  Rng rng = make_rng(4, "bench/gp");
  for (int i = 0; i < state.range(0); ++i) {
    gp.add(rng.uniform(-4.0, -1.0), rng.uniform());
  }
  double q = -2.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gp_fit_posterior(gp, q));
  }
}
BENCHMARK(BM_GpPosterior)->Arg(4)->Arg(12);

static void BM_AcquisitionMaximization(benchmark::State& state) {
  BOConfig cfg;
  GPState gp;
  gp.kernel = cfg.kernel;
  Rng rng = make_rng(5, "bench/acq");
  for (int i = 0; i < 8; ++i) {
    gp.add(rng.uniform(-4.0, -1.0), rng.uniform());
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(maximize_acquisition(gp, cfg));
  }
  state.SetItemsProcessed(state.iterations() * cfg.acquisition_grid);
}
BENCHMARK(BM_AcquisitionMaximization)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
