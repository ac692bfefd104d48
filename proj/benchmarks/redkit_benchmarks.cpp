#include <benchmark/benchmark.h>

#include "redkit/analysis.hpp"
#include "redkit/assemblability.hpp"
#include "redkit/redundancy.hpp"
#include "redkit/robustness.hpp"
#include "test_support.hpp"

namespace {

using namespace redkit;

void BM_RedundancyMatrix(benchmark::State& state) {
  const StructuralModel m =
      testing::random_truss_with_members(7, static_cast<int>(state.range(0)), 6);
  for (auto _ : state) {
    const AnalysisState s = build_matrices(m);
    benchmark::DoNotOptimize(compute_redundancy_matrix(s));
  }
  state.counters["n_q"] = build_matrices(m).member_count();
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RedundancyMatrix)->Arg(125)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond)->Complexity();

struct RemovalSetup {
  StructuralModel model;
  AnalysisState state;
  RedundancyMatrix r;
  int k = 0;
  explicit RemovalSetup(int members)
      : model(testing::random_truss_with_members(11, members)),
        state(build_matrices(model)),
        r(compute_redundancy_matrix(state)) {
    r.diagonal.maxCoeff(&k);
  }
};

void BM_RemovalUpdate(benchmark::State& state) {
  const RemovalSetup setup(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(remove_element_update(setup.state, setup.r, setup.k));
  }
}
BENCHMARK(BM_RemovalUpdate)->Arg(320)->Unit(benchmark::kMillisecond);

void BM_RemovalRebuild(benchmark::State& state) {
  const RemovalSetup setup(static_cast<int>(state.range(0)));
  const std::vector<int> drop{setup.k};
  for (auto _ : state) {
    const AnalysisState s = build_matrices(remove_elements(setup.model, drop));
    benchmark::DoNotOptimize(compute_redundancy_matrix(s));
  }
}
BENCHMARK(BM_RemovalRebuild)->Arg(320)->Unit(benchmark::kMillisecond);

void BM_RobustnessTable(benchmark::State& state) {
  const StructuralModel m =
      testing::random_truss_with_members(13, static_cast<int>(state.range(0)));
  const AnalysisState s = build_matrices(m);
  const RedundancyMatrix r = compute_redundancy_matrix(s);
  const Eigen::VectorXd f = load_vector(m, s.dofs());
  for (auto _ : state) benchmark::DoNotOptimize(robustness_table(s, r, f));
}
BENCHMARK(BM_RobustnessTable)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_SequenceSearch(benchmark::State& state) {
  const StructuralModel m = testing::load_fixture("assembly_truss_2d.json");
  for (auto _ : state) {
    benchmark::DoNotOptimize(search_sequences(m, m.plan->base));
  }
}
BENCHMARK(BM_SequenceSearch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
