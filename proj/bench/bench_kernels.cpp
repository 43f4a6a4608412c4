// Serial reference kernels against their OpenMP counterparts.
// Arguments: exec (0 serial, 1 parallel), then problem size.

#include <benchmark/benchmark.h>

#include "cbdsl/baselines.hpp"
#include "cbdsl/data.hpp"
#include "cbdsl/model.hpp"
#include "cbdsl/swarm.hpp"

using namespace cbdsl;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void BM_LossAndGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  const Dataset ds = synthetic_blobs(10, n / 10, 64, 3.0, 1);
  const auto idx = all_indices(ds);
  const SampleView view = view_of(ds, idx);
  const ModelSpec spec{ModelKind::mlp, 64, {64}, 10};
  auto rng = RngStream::derive(1, Stream::init);
  const auto w = init_parameters(spec, rng);
  const Exec exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(spec, w, view, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_RunRound(benchmark::State& state) {
  const auto U = static_cast<std::size_t>(state.range(1));
  ExperimentSetup s;
  s.train = synthetic_blobs(10, 100 * U, 20, 3.0, 1);
  s.spec = {ModelKind::softmax_regression, 20, {}, 10};
  s.plan = partition_shards(s.train, 20 * U, 2, U, 1);
  s.shared = build_global_shared(s.train, 0, 500, s.plan, 1);
  auto rng = RngStream::derive(1, Stream::init);
  s.w0 = init_parameters(s.spec, rng);
  s.h.num_workers = U;
  s.h.batch_size = 32;
  const Exec exec = exec_of(state);
  auto workers = make_workers(s, VariantId::cbdsl_gsc, exec);
  PsState ps;
  RoundConfig cfg;
  cfg.spec = &s.spec;
  cfg.data = &s.train;
  cfg.h = s.h;
  cfg.score_set = s.shared.score;
  cfg.exec = exec;
  for (auto _ : state) benchmark::DoNotOptimize(run_round(workers, ps, cfg));
}

}  // namespace

BENCHMARK(BM_LossAndGradient)->ArgsProduct({{0, 1}, {1000, 10000}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RunRound)->ArgsProduct({{0, 1}, {10, 50}})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
