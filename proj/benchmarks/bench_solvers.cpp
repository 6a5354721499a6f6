#include <benchmark/benchmark.h>

#include "ifdfm/solvers.hpp"
#include "ifdfm/rng.hpp"

using namespace ifdfm;

namespace {

struct Problem {
  FeatureMatrix x;
  std::vector<double> y;
  ParamVector theta;
  Vector b;
};

const Problem& problem() {
  static const Problem p = [] {
    const Index n = 20000, d = 16;
    Rng rng(11);
    Problem out{FeatureMatrix(n, d), std::vector<double>(n), {}, {}};
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) out.x(i, j) = rng.normal();
      out.y[i] = rng.uniform() < 0.2 ? 1.0 : 0.0;
    }
    out.theta = initial_params(ModelSpec::logistic(d), 0);
    out.b = Vector(d + 1);
    for (Index j = 0; j <= d; ++j) out.b[j] = rng.normal();
    return out;
  }();
  return p;
}

void BM_Solve(benchmark::State& state) {
  const Problem& p = problem();
  const DampedHessianOperator op(ModelSpec::logistic(16), p.theta, p.x, p.y,
                                 1e-3);
  SolverConfig cfg;
  cfg.kind = static_cast<SolverKind>(state.range(0));
  cfg.max_epochs = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve(op, p.b, cfg));
  }
  state.SetLabel(std::string(solver_name(cfg.kind)));
}

}  // namespace

BENCHMARK(BM_Solve)
    ->Arg(static_cast<int>(SolverKind::kConjugateGradient))
    ->Arg(static_cast<int>(SolverKind::kNeumann))
    ->Arg(static_cast<int>(SolverKind::kStochasticQuadratic))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
