// Layer-parallel kernels against the serial depth-first reference.
// Run with --benchmark_counters_tabular=true for a compact table.

#include <benchmark/benchmark.h>

#include <omp.h>

#include "rbsde/drbsde.hpp"
#include "rbsde/instances.hpp"
#include "rbsde/reference.hpp"

using namespace rbsde;

namespace {

struct Case {
  ProblemSpec problem;
  SweepInputs inputs;
};

// Binary tree (no marks) so the depth can go up to the low twenties.
Case make_case(int steps) {
  instances::Rng rng(7);
  Case c;
  c.problem = instances::random_problem(rng, instances::random_tree(rng, steps, 0), {});
  c.inputs.tree = c.problem.tree.get();
  c.inputs.barriers = &c.problem.barriers;
  c.inputs.terminal = &c.problem.terminal;
  c.inputs.drift = generator_drift(*c.problem.tree, c.problem.state, c.problem.generator);
  return c;
}

void BM_sweep_parallel(benchmark::State& state) {
  const Case c = make_case(static_cast<int>(state.range(0)));
  const Exec exec{static_cast<int>(state.range(1))};
  for (auto _ : state) benchmark::DoNotOptimize(reflected_sweep(c.inputs, exec).y[0]);
  state.counters["nodes"] = static_cast<double>(c.problem.tree->node_count());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.problem.tree->node_count()));
}

void BM_sweep_reference(benchmark::State& state) {
  const Case c = make_case(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::reflected_sweep(c.inputs).y[0]);
  state.counters["nodes"] = static_cast<double>(c.problem.tree->node_count());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.problem.tree->node_count()));
}

void BM_snell_parallel(benchmark::State& state) {
  const Case c = make_case(static_cast<int>(state.range(0)));
  const Exec exec{static_cast<int>(state.range(1))};
  const Tree& t = *c.problem.tree;
  const AdaptedValues drift(t, 0, t.steps() - 1, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(snell_envelope(t, c.problem.barriers.lower, drift, exec)[0]);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t.node_count()));
}

void BM_snell_reference(benchmark::State& state) {
  const Case c = make_case(static_cast<int>(state.range(0)));
  const Tree& t = *c.problem.tree;
  const AdaptedValues drift(t, 0, t.steps() - 1, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(reference::snell_envelope(t, c.problem.barriers.lower, drift)[0]);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t.node_count()));
}

void parallel_args(benchmark::internal::Benchmark* b) {
  const int hw = omp_get_max_threads();
  for (int steps : {14, 17, 19})
    for (int workers : {1, 2, 4, 8})
      if (workers <= hw) b->Args({steps, workers});
}

void serial_args(benchmark::internal::Benchmark* b) {
  for (int steps : {14, 17, 19}) b->Args({steps});
}

}  // namespace

BENCHMARK(BM_sweep_parallel)->Apply(parallel_args)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_sweep_reference)->Apply(serial_args)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_snell_parallel)->Apply(parallel_args)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_snell_reference)->Apply(serial_args)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
