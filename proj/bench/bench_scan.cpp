#include <benchmark/benchmark.h>

#include "stabpert/parallel.hpp"
#include "stabpert/perturbation.hpp"
#include "stabpert/resolvent.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

namespace {

Exec policy(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

void BM_CircleScan(benchmark::State& state) {
  const Scenario s = builtin_scenario("S2");
  const OperatorModel m = s.build_model();
  const ScanGrid grid = build_grids(s.profile, s.config.grid.refined(1));
  const Exec exec = policy(state);
  for (auto _ : state) benchmark::DoNotOptimize(circle_scan(m, s.profile, grid, exec));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * grid.circle.size()));
}

void BM_RegionScan(benchmark::State& state) {
  const Scenario s = builtin_scenario("S1");
  const OperatorModel m = s.build_model();
  ScanConfig cfg = s.scan_config();
  cfg.exec = policy(state);
  for (auto _ : state) benchmark::DoNotOptimize(analyze_region(m, s.profile, 0, 1.0, cfg));
}

void BM_TransferField(benchmark::State& state) {
  const Scenario s = builtin_scenario("S1-P1");
  const OperatorModel m = s.build_model();
  const PerturbedSystem sys(m, s.perturbation);
  ScanConfig cfg = s.scan_config();
  cfg.exec = policy(state);
  for (auto _ : state) benchmark::DoNotOptimize(transfer_field(sys, s.profile, cfg));
}

}  // namespace

BENCHMARK(BM_CircleScan)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RegionScan)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TransferField)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(1);

int main(int argc, char** argv) {
  configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
