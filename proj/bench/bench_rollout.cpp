// Serial reference kernels against their OpenMP counterparts on the shipped
// bioreactor. Pass --benchmark_filter=Parallel with CHANCE_RL_THREADS set to
// scan worker counts.

#include <cstdlib>
#include <string>

#include <benchmark/benchmark.h>

#include "chance_rl/bioreactor.hpp"
#include "chance_rl/config.hpp"
#include "chance_rl/reinforce.hpp"

using namespace chance_rl;

namespace {

struct Setup {
  config::ExperimentConfig cfg = config::load_config(std::string(CHANCE_RL_SOURCE_DIR) + "/config/bioreactor.yaml");
  bioreactor::Bioreactor env{cfg.environment};
  policy::GaussianPolicy policy{cfg.architecture(env)};
  policy::PolicyParameters params;

  Setup() {
    auto rng = make_rng(1, {});
    params = policy.initialize(rng);
    if (const char* t = std::getenv("CHANCE_RL_THREADS")) rollout::set_thread_count(std::atoi(t));
  }
};

Setup& setup() {
  static Setup s;
  return s;
}

void collect(benchmark::State& state, rollout::Execution exec) {
  auto& s = setup();
  const auto k = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto batch = rollout::collect_batch(s.env, s.policy, s.params, seed++, k, exec);
    benchmark::DoNotOptimize(batch.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void scores(benchmark::State& state, rollout::Execution exec) {
  auto& s = setup();
  const auto batch = rollout::collect_batch(s.env, s.policy, s.params, 7,
                                            static_cast<std::size_t>(state.range(0)),
                                            rollout::Execution::Serial);
  for (auto _ : state) {
    auto g = reinforce::score_sums(s.policy, s.params, batch, exec);
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_CollectSerial(benchmark::State& st) { collect(st, rollout::Execution::Serial); }
void BM_CollectParallel(benchmark::State& st) { collect(st, rollout::Execution::Parallel); }
void BM_ScoresSerial(benchmark::State& st) { scores(st, rollout::Execution::Serial); }
void BM_ScoresParallel(benchmark::State& st) { scores(st, rollout::Execution::Parallel); }

}  // namespace

BENCHMARK(BM_CollectSerial)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CollectParallel)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoresSerial)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoresParallel)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
