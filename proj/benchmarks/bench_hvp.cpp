#include <benchmark/benchmark.h>

#include "ifdfm/model.hpp"
#include "ifdfm/rng.hpp"

using namespace ifdfm;

namespace {

struct Batch {
  FeatureMatrix x;
  std::vector<double> y;
};

Batch make_batch(Index n, Index d) {
  Rng rng(7);
  Batch b{FeatureMatrix(n, d), std::vector<double>(static_cast<std::size_t>(n))};
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) b.x(i, j) = rng.normal();
    b.y[i] = rng.uniform() < 0.2 ? 1.0 : 0.0;
  }
  return b;
}

ModelSpec spec_for(int hidden) {
  return hidden == 0 ? ModelSpec::logistic(16)
                     : ModelSpec::mlp(16, {hidden, hidden});
}

void BM_Grad(benchmark::State& state) {
  const ModelSpec spec = spec_for(static_cast<int>(state.range(0)));
  const Model model(spec);
  const ParamVector theta = initial_params(spec, 1);
  const Batch b = make_batch(state.range(1), 16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.grad(theta, b.x, b.y));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_Hvp(benchmark::State& state) {
  const ModelSpec spec = spec_for(static_cast<int>(state.range(0)));
  const Model model(spec);
  const ParamVector theta = initial_params(spec, 1);
  const Vector v = initial_params(spec, 2);
  const Batch b = make_batch(state.range(1), 16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.hvp(theta, b.x, b.y, v));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

}  // namespace

BENCHMARK(BM_Grad)->ArgsProduct({{0, 64}, {256, 10000}});
BENCHMARK(BM_Hvp)->ArgsProduct({{0, 64}, {256, 10000}});

BENCHMARK_MAIN();
