#include <benchmark/benchmark.h>

#include "attnflow/pathways.hpp"
#include "attnflow/probes.hpp"
#include "attnflow/synthvqa.hpp"
#include "attnflow/training.hpp"

namespace {

using namespace attnflow;

ModelConfig default_config() {
  ModelConfig c;
  c.init_seed = 3;
  return c;
}

const Example& sample() {
  static const Example ex = generate(TaskFamily::MovingDirection, 1, 1, FrameLayout{}, false)[0];
  return ex;
}

void BM_Forward(benchmark::State& state) {
  const ModelParams p = init_params(default_config());
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, sample().tokens));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_ForwardWithSchedule(benchmark::State& state) {
  const ModelParams p = init_params(default_config());
  const auto s = cross_frame_schedule(sample().spans, {0, 3}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, sample().tokens, &s, true));
}
BENCHMARK(BM_ForwardWithSchedule)->Unit(benchmark::kMillisecond);

void BM_LossAndGrad(benchmark::State& state) {
  const ModelParams p = init_params(default_config());
  const auto data = to_labeled(generate(TaskFamily::MovingDirection, static_cast<std::size_t>(state.range(0)),
                                        2, FrameLayout{}, false));
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(p, data));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrad)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_KnockoutSweep(benchmark::State& state) {
  const ModelParams p = init_params(default_config());
  for (auto _ : state)
    benchmark::DoNotOptimize(knockout_sweep(p, sample().tokens, sample().spans, Flow::VideoToLast, 3));
}
BENCHMARK(BM_KnockoutSweep)->Unit(benchmark::kMillisecond);

void BM_CountEnabledEdges(benchmark::State& state) {
  const PathwayConfig pc = pathway_config_from_ranges(
      {{"cross-frame", {{1, 3}}}, {"video-question", {{1, 4}}}, {"question-last", {{4, 6}}}}, 8);
  const auto s = effective_schedule(pc, sample().spans, 8);
  for (auto _ : state) benchmark::DoNotOptimize(count_enabled_edges(&s, sample().spans.seq_len(), 8));
}
BENCHMARK(BM_CountEnabledEdges);

void BM_RandomSchedule(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(random_schedule(sample().spans, 8, 3000, seed++));
}
BENCHMARK(BM_RandomSchedule);

}  // namespace

BENCHMARK_MAIN();
