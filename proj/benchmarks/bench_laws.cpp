// SPDX-License-Identifier: Apache-2.0
// Fitting cost: the strong form pays for a 1-D search over the block-size
// shift on top of the weak form's single least-squares solve.
#include <benchmark/benchmark.h>

#include <vector>

#include "quantlaw/laws.hpp"
#include "quantlaw/oracle.hpp"

using namespace quantlaw;

namespace {

std::vector<std::pair<ExperimentPoint, double>> dataset(bool strong) {
  LawParams p;
  p.c = 0.0028;
  p.a_ratio = 5.2055;
  p.gamma_n = 0.7651;
  if (strong) {
    p.form = LawForm::strong;
    p.d_shift = 13.632;
    p.gamma_c = 0.4741;
  }
  std::vector<ExperimentPoint> grid;
  for (double n : {0.06, 0.2, 0.6, 1.1})
    for (double qr : {0.5, 0.7, 0.8, 0.9, 0.975})
      for (int64_t qb : {16, 32, 64, 128, 256})
        grid.push_back({n, std::nullopt, qr, qb});
  return gen_dataset(p, grid, 0.05, 42);
}

void BM_fit_weak(benchmark::State& state) {
  const auto data = dataset(false);
  for (auto _ : state)
    benchmark::DoNotOptimize(fit_law(data, LawForm::weak));
}

void BM_fit_strong(benchmark::State& state) {
  const auto data = dataset(true);
  for (auto _ : state)
    benchmark::DoNotOptimize(fit_law(data, LawForm::strong));
}

void BM_eval_law(benchmark::State& state) {
  LawParams p;
  p.c = 0.0028;
  p.a_ratio = 5.2055;
  p.gamma_n = 0.7651;
  p.d_shift = 13.632;
  p.gamma_c = 0.4741;
  p.form = LawForm::strong;
  const ExperimentPoint pt{0.6, std::nullopt, 0.9, 32};
  for (auto _ : state) benchmark::DoNotOptimize(eval_law(p, pt));
}

}  // namespace

BENCHMARK(BM_fit_weak)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_fit_strong)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_eval_law);
