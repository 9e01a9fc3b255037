// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "quantlaw/errors.hpp"
#include "quantlaw/formats.hpp"
#include "quantlaw/rng.hpp"

using namespace quantlaw;

namespace {

// Mixed-magnitude corpus: uniform mantissas spread over ~20 binades, plus a
// sprinkle of exact zeros. Deterministic by seed.
std::vector<float> corpus(size_t n, uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<float> v(n);
  for (size_t i = 0; i < n; ++i) {
    if (eng() % 97 == 0) {
      v[i] = 0.0f;
      continue;
    }
    const double u = 2.0 * uniform01(eng) - 1.0;
    const int e = static_cast<int>(eng() % 21) - 10;
    v[i] = static_cast<float>(std::ldexp(u, e));
  }
  return v;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("descriptor grammar round-trips and rejects junk") {
  const BlockFormat m = BlockFormat::parse("mxint4:32");
  CHECK(m.kind == FormatKind::mxint);
  CHECK(m.bits == 4);
  CHECK(m.block_size == 32);
  CHECK(m.to_string() == "mxint4:32");

  const BlockFormat a = BlockFormat::parse("affine8:64");
  CHECK(a.kind == FormatKind::affine_int);
  CHECK(a.bits == 8);
  CHECK(a.block_size == 64);
  CHECK(a.to_string() == "affine8:64");

  CHECK(BlockFormat::parse("mxint2:1").block_size == 1);

  CHECK_THROWS_AS(BlockFormat::parse("int4:32"), InvalidFormat);
  CHECK_THROWS_AS(BlockFormat::parse("mxint1:32"), InvalidFormat);   // bits < 2
  CHECK_THROWS_AS(BlockFormat::parse("mxint9:32"), InvalidFormat);   // bits > 8
  CHECK_THROWS_AS(BlockFormat::parse("mxint4:33"), InvalidFormat);   // not 2^k
  CHECK_THROWS_AS(BlockFormat::parse("mxint4:0"), InvalidFormat);
  CHECK_THROWS_AS(BlockFormat::parse("mxint4:8192"), InvalidFormat);
  CHECK_THROWS_AS(BlockFormat::parse("mxint4"), InvalidFormat);
  CHECK_THROWS_AS(BlockFormat::parse(""), InvalidFormat);
  CHECK_THROWS_AS(BlockFormat::parse("mxint4:32x"), InvalidFormat);
}

TEST_CASE("mxint encode places the shared exponent under amax") {
  // 1.0 at 8 bits: exponent 0 - 6 = -6, mantissa 64, exact reconstruction
  const std::vector<float> one = {1.0f};
  const QuantizedBlock qb = mxint_encode_block(one, 8);
  CHECK(qb.shared_exponent == -6);
  REQUIRE(qb.mantissas.size() == 1);
  CHECK(qb.mantissas[0] == 64);
  CHECK(qb.saturation_count == 0);
  CHECK(static_cast<float>(std::ldexp(static_cast<double>(qb.mantissas[0]),
                                      qb.shared_exponent)) == 1.0f);

  // +-0.6 at 2 bits: exponent -1, mantissas +-1 -> +-0.5
  const std::vector<float> pair = {0.6f, -0.6f};
  const BlockFormat f2{FormatKind::mxint, 2, 32};
  const std::vector<float> q = mxint_fake_quant(pair, f2);
  CHECK(q[0] == 0.5f);
  CHECK(q[1] == -0.5f);
}

TEST_CASE("mxint zero blocks and tiny blocks flush to zero") {
  const BlockFormat f{FormatKind::mxint, 4, 4};
  int64_t sat = -1;
  const std::vector<float> zeros(8, 0.0f);
  CHECK(bitwise_equal(mxint_fake_quant(zeros, f, &sat), zeros));
  CHECK(sat == 0);

  // amax so small the shared exponent would sink below -126
  const std::vector<float> tiny = {std::ldexp(1.0f, -140),
                                   -std::ldexp(1.0f, -141)};
  const std::vector<float> q = mxint_fake_quant(tiny, f);
  CHECK(q[0] == 0.0f);
  CHECK(q[1] == 0.0f);
}

TEST_CASE("mxint saturates only the top rounding edge") {
  // 0.9999 at 2 bits: e = -1, m = round(1.9998) = 2 > qmax = 1 -> clamp
  const std::vector<float> v = {0.9999f};
  int64_t sat = 0;
  const std::vector<float> q =
      mxint_fake_quant(v, BlockFormat{FormatKind::mxint, 2, 32}, &sat);
  CHECK(q[0] == 0.5f);
  CHECK(sat == 1);

  // exactly representable values never saturate
  sat = -1;
  const std::vector<float> grid = {0.5f, -0.5f, 0.0f};
  mxint_fake_quant(grid, BlockFormat{FormatKind::mxint, 2, 32}, &sat);
  CHECK(sat == 0);
}

TEST_CASE("affine maps group endpoints exactly") {
  const BlockFormat f{FormatKind::affine_int, 2, 4};
  const std::vector<float> v = {0.0f, 0.4f, 1.0f};
  const std::vector<float> q = affine_fake_quant(v, f);
  CHECK(q[0] == 0.0f);
  CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(q[2] == 1.0f);

  // negative range: endpoints still exact
  const std::vector<float> w = {-2.0f, -1.9f, 3.0f, 0.0f};
  const std::vector<float> qw =
      affine_fake_quant(w, BlockFormat{FormatKind::affine_int, 8, 4});
  CHECK(qw[0] == -2.0f);
  CHECK(qw[2] == 3.0f);
}

TEST_CASE("affine constant groups pass through unchanged") {
  const BlockFormat f{FormatKind::affine_int, 4, 4};
  const std::vector<float> v(8, 0.37f);
  int64_t sat = -1;
  CHECK(bitwise_equal(affine_fake_quant(v, f, &sat), v));
  CHECK(sat == 0);
}

TEST_CASE("quantization is idempotent") {
  const std::vector<float> src = corpus(4096, 11);
  for (const char* desc : {"mxint2:32", "mxint4:16", "mxint8:1",
                           "affine2:32", "affine4:64", "affine8:4"}) {
    const BlockFormat f = BlockFormat::parse(desc);
    const std::vector<float> once = fake_quant(src, f);
    int64_t sat = -1;
    const std::vector<float> twice = fake_quant(once, f, &sat);
    CAPTURE(desc);
    CHECK(bitwise_equal(once, twice));
    // already on the grid: nothing clamps
    CHECK(sat == 0);
  }
}

TEST_CASE("blocks are independent") {
  const BlockFormat f{FormatKind::mxint, 4, 32};
  std::vector<float> src = corpus(128, 5);
  const std::vector<float> base = fake_quant(src, f);
  // rewriting block 2 must leave blocks 0, 1, 3 untouched
  for (size_t i = 64; i < 96; ++i) src[i] *= 1000.0f;
  const std::vector<float> mod = fake_quant(src, f);
  for (size_t i = 0; i < 128; ++i) {
    if (i >= 64 && i < 96) continue;
    CHECK(mod[i] == base[i]);
  }
}

TEST_CASE("block_size 1 equals elementwise quantization") {
  const std::vector<float> src = corpus(257, 7);
  for (FormatKind kind : {FormatKind::mxint, FormatKind::affine_int}) {
    const BlockFormat f{kind, 4, 1};
    const std::vector<float> whole = fake_quant(src, f);
    for (size_t i = 0; i < src.size(); ++i) {
      const std::vector<float> single = {src[i]};
      CHECK(fake_quant(single, f)[0] == whole[i]);
    }
  }
}

TEST_CASE("scaling by powers of two commutes with quantization") {
  const std::vector<float> src = corpus(512, 9);
  for (FormatKind kind : {FormatKind::mxint, FormatKind::affine_int}) {
    const BlockFormat f{kind, 4, 32};
    const std::vector<float> q = fake_quant(src, f);
    for (int k : {-3, 5}) {
      std::vector<float> scaled(src.size());
      for (size_t i = 0; i < src.size(); ++i)
        scaled[i] = std::ldexp(src[i], k);
      const std::vector<float> qs = fake_quant(scaled, f);
      for (size_t i = 0; i < src.size(); ++i)
        CHECK(qs[i] == std::ldexp(q[i], k));  // exact, not approximate
    }
  }
}

TEST_CASE("more bits never fit worse") {
  const std::vector<float> src = corpus(10000, 42);
  for (FormatKind kind : {FormatKind::mxint, FormatKind::affine_int}) {
    double prev = std::numeric_limits<double>::infinity();
    for (int bits : {2, 3, 4, 6, 8}) {
      const BlockFormat f{kind, bits, 32};
      int64_t sat = 0;
      const std::vector<float> q = fake_quant(src, f, &sat);
      const QuantStats st = quant_error(src, q, sat);
      CAPTURE(bits);
      CHECK(st.mse <= prev);
      prev = st.mse;
    }
  }
}

TEST_CASE("public kernels agree with the reference block encoder") {
  const std::vector<float> src = corpus(1000, 13);
  const BlockFormat f{FormatKind::mxint, 4, 32};
  const std::vector<float> fused = mxint_fake_quant(src, f);
  for (size_t start = 0; start < src.size(); start += 32) {
    const size_t len = std::min<size_t>(32, src.size() - start);
    const QuantizedBlock qb = mxint_encode_block(
        std::span<const float>(src.data() + start, len), 4);
    for (size_t i = 0; i < len; ++i) {
      const float ref = static_cast<float>(
          std::ldexp(static_cast<double>(qb.mantissas[i]),
                     qb.shared_exponent));
      CHECK(fused[start + i] == ref);
    }
  }
}

TEST_CASE("row-wise quantization treats each row independently") {
  const int64_t rows = 7, cols = 48;
  const std::vector<float> src = corpus(rows * cols, 21);
  for (const char* desc : {"mxint4:32", "affine4:32"}) {
    const BlockFormat f = BlockFormat::parse(desc);
    std::vector<float> inplace = src;
    int64_t sat_rows = 0;
    fake_quant_rows_inplace(std::span<float>(inplace), rows, cols, f,
                            &sat_rows);
    int64_t sat_ref = 0;
    for (int64_t r = 0; r < rows; ++r) {
      int64_t s = 0;
      const std::vector<float> q = fake_quant(
          std::span<const float>(src.data() + r * cols, cols), f, &s);
      sat_ref += s;
      for (int64_t c = 0; c < cols; ++c)
        CHECK(inplace[r * cols + c] == q[c]);
    }
    CHECK(sat_rows == sat_ref);
  }

  std::vector<float> bad(10);
  CHECK_THROWS_AS(fake_quant_rows_inplace(std::span<float>(bad), 3, 4,
                                          BlockFormat{}),
                  InvalidInput);
}

TEST_CASE("quant_error reports mse and max abs error") {
  const std::vector<float> a = {1.0f, 2.0f, 3.0f};
  const std::vector<float> b = {1.0f, 2.5f, 2.0f};
  const QuantStats st = quant_error(a, b, 4);
  CHECK(st.mse == doctest::Approx((0.25 + 1.0) / 3.0));
  CHECK(st.max_abs_err == doctest::Approx(1.0));
  CHECK(st.saturation_count == 4);
  CHECK_THROWS_AS(quant_error(a, std::vector<float>{1.0f}), InvalidInput);
}

TEST_CASE("partial trailing blocks are quantized, not padded") {
  // 40 values with block 32: second block has 8 elements and its own scale
  std::vector<float> v(40, 0.0f);
  for (size_t i = 0; i < 40; ++i) v[i] = static_cast<float>(i % 5) - 2.0f;
  v[39] = 1000.0f;  // spikes only the trailing partial block's range
  const BlockFormat f{FormatKind::mxint, 4, 32};
  const std::vector<float> q = fake_quant(v, f);
  const std::vector<float> head =
      fake_quant(std::span<const float>(v.data(), 32), f);
  for (size_t i = 0; i < 32; ++i) CHECK(q[i] == head[i]);
}
