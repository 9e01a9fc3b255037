// SPDX-License-Identifier: Apache-2.0
// Cost of one forward evaluation and of one search trial; the end-to-end
// search budget is roughly trials x these numbers.
#include <benchmark/benchmark.h>

#include <vector>

#include "quantlaw/model.hpp"

using namespace quantlaw;

namespace {

struct MicroFixture {
  Checkpoint ckpt = init_random(ModelConfig::clm_micro(), 1);
  std::vector<uint32_t> window = gen_random_tokens(256, 128, 2);
  std::vector<uint32_t> corpus = gen_random_tokens(256, 4096, 2);
};

MicroFixture& fixture() {
  static MicroFixture fx;
  return fx;
}

void BM_forward_window(benchmark::State& state) {
  MicroFixture& fx = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(forward_loss(fx.ckpt, fx.window));
}

void BM_corpus_baseline(benchmark::State& state) {
  MicroFixture& fx = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(corpus_loss(fx.ckpt, fx.corpus));
}

// one trial under the evaluator: pre-quantized weights + live activations
void BM_trial_loss(benchmark::State& state) {
  MicroFixture& fx = fixture();
  const BlockFormat fmt = BlockFormat::parse("mxint4:32");
  const PlanEvaluator ev(fx.ckpt, fx.corpus, fmt, true);
  const auto sites = enumerate_sites(fx.ckpt.config, Granularity::matmul);
  QuantPlan plan;
  plan.method = fmt;
  for (size_t i = 0; i < sites.size(); ++i) {
    plan.site_param_counts[sites[i].first] = sites[i].second;
    if (i % 2 == 0) plan.low_precision_sites.insert(sites[i].first);
  }
  for (auto _ : state) benchmark::DoNotOptimize(ev.loss(plan));
}

void BM_evaluator_setup(benchmark::State& state) {
  MicroFixture& fx = fixture();
  const BlockFormat fmt = BlockFormat::parse("mxint4:32");
  for (auto _ : state) {
    const PlanEvaluator ev(fx.ckpt, fx.corpus, fmt, true);
    benchmark::DoNotOptimize(ev.baseline());
  }
}

}  // namespace

BENCHMARK(BM_forward_window)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_corpus_baseline)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_trial_loss)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluator_setup)->Unit(benchmark::kMillisecond);
