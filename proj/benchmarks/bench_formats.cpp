// SPDX-License-Identifier: Apache-2.0
// Throughput of the fake-quantization kernels, the hot inner loop of
// activation quantization during search.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "quantlaw/formats.hpp"
#include "quantlaw/rng.hpp"

using namespace quantlaw;

namespace {

std::vector<float> make_corpus(size_t n) {
  std::mt19937_64 eng(17);
  std::vector<float> v(n);
  for (float& x : v) {
    const double u = 2.0 * uniform01(eng) - 1.0;
    x = static_cast<float>(std::ldexp(u, static_cast<int>(eng() % 13) - 6));
  }
  return v;
}

void BM_fake_quant(benchmark::State& state, FormatKind kind) {
  const int bits = static_cast<int>(state.range(0));
  const int block = static_cast<int>(state.range(1));
  const BlockFormat fmt{kind, bits, block};
  const std::vector<float> src = make_corpus(1 << 16);
  std::vector<float> buf(src.size());
  for (auto _ : state) {
    buf = src;
    int64_t sat = 0;
    fake_quant_rows_inplace(std::span<float>(buf), 1,
                            static_cast<int64_t>(buf.size()), fmt, &sat);
    benchmark::DoNotOptimize(buf.data());
    benchmark::DoNotOptimize(sat);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(src.size()));
}

void BM_row_quant(benchmark::State& state) {
  // matches the matmul activation shape of the micro model's FFN input
  const BlockFormat fmt = BlockFormat::parse("mxint4:32");
  const int64_t rows = 128, cols = 192;
  const std::vector<float> src = make_corpus(rows * cols);
  std::vector<float> buf(src.size());
  for (auto _ : state) {
    buf = src;
    fake_quant_rows_inplace(std::span<float>(buf), rows, cols, fmt);
    benchmark::DoNotOptimize(buf.data());
  }
  state.SetItemsProcessed(state.iterations() * rows * cols);
}

}  // namespace

BENCHMARK_CAPTURE(BM_fake_quant, mxint, FormatKind::mxint)
    ->ArgsProduct({{2, 4, 8}, {1, 32, 128}});
BENCHMARK_CAPTURE(BM_fake_quant, affine, FormatKind::affine_int)
    ->ArgsProduct({{2, 4, 8}, {1, 32, 128}});
BENCHMARK(BM_row_quant);
