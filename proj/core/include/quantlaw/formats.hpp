// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quantlaw {

enum class FormatKind : uint8_t {
  mxint,       // shared power-of-two exponent per block, signed integer mantissas
  affine_int,  // per-block min/max affine mapping onto [0, 2^bits - 1]
};

// Descriptor of a block-scaled low-precision element format. The block size
// is the number of consecutive values sharing one scaling factor.
struct BlockFormat {
  FormatKind kind = FormatKind::mxint;
  int bits = 4;
  int block_size = 32;

  // bits in [2, 8]; block_size a power of two in [1, 4096].
  void validate() const;

  // Descriptor grammar: mxint<bits>:<block> | affine<bits>:<block>
  std::string to_string() const;
  static BlockFormat parse(std::string_view descriptor);

  bool operator==(const BlockFormat&) const = default;
};

// One encoded MXINT block: signed mantissas against a shared power-of-two
// scale. Every mantissa m satisfies |m| <= 2^(bits-1) - 1 (symmetric range;
// -2^(bits-1) is never produced). An all-zero source block encodes to
// all-zero mantissas.
struct QuantizedBlock {
  int shared_exponent = 0;
  std::vector<int32_t> mantissas;
  int64_t saturation_count = 0;
};

struct QuantStats {
  double mse = 0.0;
  double max_abs_err = 0.0;
  int64_t saturation_count = 0;
};

// Shared exponent placement: e = floor(log2(amax)) - (bits - 2), which puts
// amax/2^e in [2^(bits-2), 2^(bits-1)). Mantissas are round-half-to-even of
// x/2^e, clamped to the symmetric range. e is clamped to [-126, 127]; blocks
// whose exponent would fall below -126 flush to zero.
QuantizedBlock mxint_encode_block(std::span<const float> block, int bits);

// Quantize-then-dequantize. The output length equals the input length; a
// trailing partial block is treated as a short block, never padded.
// saturation_count, when non-null, receives the number of clamped elements.
std::vector<float> mxint_fake_quant(std::span<const float> values,
                                    const BlockFormat& fmt,
                                    int64_t* saturation_count = nullptr);

// Per group of block_size values: scale = (max - min)/(2^bits - 1) with
// scale = 1 for a zero-range group, q = round((x - min)/scale) clamped to
// [0, 2^bits - 1], reconstruction min + q*scale. Group endpoints are exact.
std::vector<float> affine_fake_quant(std::span<const float> values,
                                     const BlockFormat& fmt,
                                     int64_t* saturation_count = nullptr);

// Dispatch on fmt.kind.
std::vector<float> fake_quant(std::span<const float> values,
                              const BlockFormat& fmt,
                              int64_t* saturation_count = nullptr);

// Row-wise variant for matrices stored row-major: each row is quantized as
// an independent sequence so blocks never straddle the reduction dimension.
void fake_quant_rows_inplace(std::span<float> values, int64_t rows,
                             int64_t cols, const BlockFormat& fmt,
                             int64_t* saturation_count = nullptr);

// mse and max abs error between a source sequence and its quantized image.
// saturation_count is carried through from the encode that produced
// `quantized`; kernels report it via their out-parameter.
QuantStats quant_error(std::span<const float> original,
                       std::span<const float> quantized,
                       int64_t saturation_count = 0);

}  // namespace quantlaw
