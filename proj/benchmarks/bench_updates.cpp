#include <benchmark/benchmark.h>

#include "gridmc/certificate.hpp"
#include "gridmc/completion.hpp"
#include "gridmc/experiment.hpp"

using namespace gridmc;

namespace {

ExperimentInstance make_instance(int areas, Index steps) {
  ExperimentConfig c;
  c.areas = areas;
  c.time_steps = steps;
  c.admm.rank = 2;
  return prepare_instance(c, 0);
}

AdmmConfig bench_config() {
  AdmmConfig cfg;
  cfg.rank = 2;
  return cfg;
}

void BM_UpdateU(benchmark::State& state) {
  const auto inst = make_instance(5, state.range(0));
  DecentralizedSolver solver(inst.problem, bench_config());
  solver.iterate();
  const auto& area = solver.areas()[2];
  const auto& st = solver.states()[2];
  for (auto _ : state) benchmark::DoNotOptimize(update_u(area, st, solver.config()));
}
BENCHMARK(BM_UpdateU)->Arg(1)->Arg(5)->Arg(10);

void BM_UpdateV(benchmark::State& state) {
  const auto inst = make_instance(5, state.range(0));
  DecentralizedSolver solver(inst.problem, bench_config());
  solver.iterate();
  const auto& area = solver.areas()[2];
  const auto& st = solver.states()[2];
  for (auto _ : state) benchmark::DoNotOptimize(update_v(area, st, solver.config()));
}
BENCHMARK(BM_UpdateV)->Arg(1)->Arg(5)->Arg(10);

void BM_DecentralizedIteration(benchmark::State& state) {
  const auto inst = make_instance(static_cast<int>(state.range(0)), 5);
  DecentralizedSolver solver(inst.problem, bench_config());
  for (auto _ : state) benchmark::DoNotOptimize(solver.iterate());
}
BENCHMARK(BM_DecentralizedIteration)->Arg(2)->Arg(5);

void BM_Certify(benchmark::State& state) {
  const auto inst = make_instance(5, 5);
  const auto cfg = bench_config();
  RunOptions opt;
  opt.stop_on_tol = false;
  AdmmConfig short_run = cfg;
  short_run.max_iters = 50;
  const auto res = run_decentralized(inst.problem, short_run, opt);
  const auto op = build_B_d(inst.mask, inst.measured.data, inst.problem.maps, cfg.mu, cfg.nu);
  for (auto _ : state) benchmark::DoNotOptimize(certify(res.factors.u, res.factors.v, op, cfg.mu));
}
BENCHMARK(BM_Certify)->Unit(benchmark::kMillisecond);

void BM_BuildOperator(benchmark::State& state) {
  const auto inst = make_instance(5, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_B_d(inst.mask, inst.measured.data, inst.problem.maps, 10.0, 1.0));
  }
}
BENCHMARK(BM_BuildOperator)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
