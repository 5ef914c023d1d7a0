#include <benchmark/benchmark.h>

#include "mft/cc_solver.hpp"
#include "mft/population.hpp"
#include "mft/wellposedness.hpp"

namespace {

mft::ModelSpec scalar_fixture() {
  mft::ScalarCoeffs c;
  c.A = -1.0;
  c.B = 1.0;
  c.C = 0.2;
  c.F = 0.3;
  c.Q = 1.0;
  c.H = 0.5;
  c.R = 1.0;
  return mft::make_scalar_spec(c, 1.0, 1.0);
}

void BM_SolveCC(benchmark::State& state) {
  const auto spec = scalar_fixture();
  const mft::TimeGrid grid{1.0, static_cast<int>(state.range(0))};
  const auto ensemble = mft::make_ensemble(grid, 2000, spec.diversity, 7);
  for (auto _ : state) {
    auto sol = mft::solve_cc(spec, grid, ensemble, 1e-8, 60);
    benchmark::DoNotOptimize(sol.iterations);
  }
}
BENCHMARK(BM_SolveCC)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_EnsembleGeneration(benchmark::State& state) {
  const mft::TimeGrid grid{1.0, 200};
  const auto law = mft::DiversityLaw::dirac();
  for (auto _ : state) {
    auto e = mft::make_ensemble(grid, static_cast<int>(state.range(0)), law, 11);
    benchmark::DoNotOptimize(e.dw.data());
  }
}
BENCHMARK(BM_EnsembleGeneration)->Arg(10000)->Arg(50000)->Unit(benchmark::kMillisecond);

void BM_Constants(benchmark::State& state) {
  const auto spec = scalar_fixture();
  for (auto _ : state) {
    auto rep = mft::optimize_modulus(mft::compute_constants(spec));
    benchmark::DoNotOptimize(rep.modulus);
  }
}
BENCHMARK(BM_Constants)->Unit(benchmark::kMillisecond);

void BM_PopulationSimulation(benchmark::State& state) {
  const auto spec = scalar_fixture();
  const mft::TimeGrid grid{1.0, 100};
  const auto policy = mft::make_riccati_policy(spec, grid);
  for (auto _ : state) {
    auto run = mft::simulate_population(spec, policy, static_cast<int>(state.range(0)), 8, 3);
    benchmark::DoNotOptimize(run.social_cost);
  }
}
BENCHMARK(BM_PopulationSimulation)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
