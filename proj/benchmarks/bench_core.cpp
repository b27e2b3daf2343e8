#include <benchmark/benchmark.h>

#include "chasedpo/cofs_trainer.hpp"
#include "chasedpo/datagen.hpp"
#include "chasedpo/evalkit.hpp"

using namespace chasedpo;

namespace {

const ReferenceModel& model() {
  static const ReferenceModel m{PolicySpec{}};
  return m;
}

const std::vector<PreferenceTriple>& stream(std::size_t n) {
  static const auto s = gen_stream(model(), {make_domain(1, 32, 1), 4096, 1});
  static std::vector<PreferenceTriple> prefix;
  prefix.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
  return prefix;
}

void BM_SeqLogprob(benchmark::State& state) {
  const auto& t = stream(1).front();
  const auto ad = init_adapter(model().spec(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(seq_logprob(model(), &ad, t.prompt, t.chosen));
}
BENCHMARK(BM_SeqLogprob);

void BM_CachedObjective(benchmark::State& state) {
  const auto cached = cache_triples(model(), stream(4));
  const auto st = init_fast_slow(model().spec(), TrainConfig{});
  const ObjectiveConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        objective_and_grad(cached, st.fast().params, st.slow().params, cfg, Role::fast));
  }
}
BENCHMARK(BM_CachedObjective);

void BM_OnlineStep(benchmark::State& state) {
  const auto cached = cache_triples(model(), stream(4));
  const TrainConfig cfg;
  auto st = init_fast_slow(model().spec(), cfg);
  for (auto _ : state) st = online_step(model(), std::move(st), cached, cfg).state;
}
BENCHMARK(BM_OnlineStep);

void BM_RunOfs(benchmark::State& state) {
  const auto& s = stream(static_cast<std::size_t>(state.range(0)));
  const TrainConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(run_ofs(model(), s, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RunOfs)->Arg(400)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_BetaSearch(benchmark::State& state) {
  const auto& s = stream(500);
  Reservoir m1(250, 1);
  Reservoir m2(250, 2);
  for (std::size_t i = 0; i < 250; ++i) m1.insert(s[i]);
  for (std::size_t i = 250; i < 500; ++i) m2.insert(s[i]);
  const auto a1 = run_ofs(model(), std::span(s).first(200), TrainConfig{}).final_fast;
  const auto a2 = run_ofs(model(), std::span(s).last(200), TrainConfig{}).final_fast;
  for (auto _ : state) {
    benchmark::DoNotOptimize(beta_search(model(), a1, a2, m1, m2, CombineConfig{}, ObjectiveConfig{}));
  }
}
BENCHMARK(BM_BetaSearch)->Unit(benchmark::kMillisecond);

void BM_OptimumEpoch(benchmark::State& state) {
  const auto cached = cache_triples(model(), stream(4000));
  const auto init = init_single(model().spec(), TrainConfig{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(offline_optimum(cached, init, TrainConfig{}, OptimumConfig{1, 1e-2}));
  }
}
BENCHMARK(BM_OptimumEpoch)->Unit(benchmark::kMillisecond);

void BM_ReservoirInsert(benchmark::State& state) {
  const auto& t = stream(1).front();
  Reservoir r(250, 7);
  for (auto _ : state) r.insert(t);
}
BENCHMARK(BM_ReservoirInsert);

}  // namespace

BENCHMARK_MAIN();
