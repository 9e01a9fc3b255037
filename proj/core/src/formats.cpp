// SPDX-License-Identifier: Apache-2.0
#include "quantlaw/formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include "quantlaw/errors.hpp"

namespace quantlaw {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

// round half to even, as std::nearbyint under the default rounding mode
double round_even(double x) { return std::nearbyint(x); }

int parse_int(std::string_view s, std::string_view what) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InvalidFormat("bad " + std::string(what) + " in format descriptor: '" +
                        std::string(s) + "'");
  return out;
}

// Allocation-free quantize-dequantize of one block. Multiplying by the
// exact power-of-two inverse is bit-identical to dividing by the scale.
void mxint_block_inplace(float* x, size_t len, int bits, int64_t& sat) {
  float amax = 0.0f;
  for (size_t i = 0; i < len; ++i) amax = std::max(amax, std::fabs(x[i]));
  if (amax == 0.0f) return;  // zero block stays zero
  int e = std::ilogb(amax) - (bits - 2);
  if (e < -126) {  // subnormal scale: flush block to zero
    std::fill_n(x, len, 0.0f);
    return;
  }
  e = std::min(e, 127);
  const double scale = std::ldexp(1.0, e);
  const double inv_scale = std::ldexp(1.0, -e);
  const double qmax = static_cast<double>((1 << (bits - 1)) - 1);
  for (size_t i = 0; i < len; ++i) {
    double m = round_even(static_cast<double>(x[i]) * inv_scale);
    if (m > qmax) {
      m = qmax;
      ++sat;
    } else if (m < -qmax) {
      m = -qmax;
      ++sat;
    }
    x[i] = static_cast<float>(m * scale);
  }
}

void affine_block_inplace(float* x, size_t len, int bits, int64_t& sat) {
  double lo = x[0], hi = x[0];
  for (size_t i = 1; i < len; ++i) {
    lo = std::min(lo, static_cast<double>(x[i]));
    hi = std::max(hi, static_cast<double>(x[i]));
  }
  const double qmax = static_cast<double>((1 << bits) - 1);
  const double scale = hi > lo ? (hi - lo) / qmax : 1.0;
  for (size_t i = 0; i < len; ++i) {
    double q = round_even((static_cast<double>(x[i]) - lo) / scale);
    if (q < 0.0) {
      q = 0.0;
      ++sat;
    } else if (q > qmax) {
      q = qmax;
      ++sat;
    }
    x[i] = static_cast<float>(lo + q * scale);
  }
}

void fake_quant_span_inplace(std::span<float> values, const BlockFormat& fmt,
                             int64_t& sat) {
  const size_t bs = static_cast<size_t>(fmt.block_size);
  for (size_t start = 0; start < values.size(); start += bs) {
    const size_t len = std::min(bs, values.size() - start);
    if (fmt.kind == FormatKind::mxint)
      mxint_block_inplace(values.data() + start, len, fmt.bits, sat);
    else
      affine_block_inplace(values.data() + start, len, fmt.bits, sat);
  }
}

}  // namespace

void BlockFormat::validate() const {
  if (bits < 2 || bits > 8)
    throw InvalidFormat("format bits must lie in [2, 8], got " +
                        std::to_string(bits));
  if (block_size < 1 || block_size > 4096 || !is_pow2(block_size))
    throw InvalidFormat("block size must be a power of two in [1, 4096], got " +
                        std::to_string(block_size));
}

std::string BlockFormat::to_string() const {
  const char* base = kind == FormatKind::mxint ? "mxint" : "affine";
  return base + std::to_string(bits) + ":" + std::to_string(block_size);
}

BlockFormat BlockFormat::parse(std::string_view descriptor) {
  BlockFormat fmt;
  std::string_view rest;
  if (descriptor.starts_with("mxint")) {
    fmt.kind = FormatKind::mxint;
    rest = descriptor.substr(5);
  } else if (descriptor.starts_with("affine")) {
    fmt.kind = FormatKind::affine_int;
    rest = descriptor.substr(6);
  } else {
    throw InvalidFormat("unknown format family in descriptor '" +
                        std::string(descriptor) + "'");
  }
  auto colon = rest.find(':');
  if (colon == std::string_view::npos)
    throw InvalidFormat("format descriptor '" + std::string(descriptor) +
                        "' needs the form <family><bits>:<block>");
  fmt.bits = parse_int(rest.substr(0, colon), "bit width");
  fmt.block_size = parse_int(rest.substr(colon + 1), "block size");
  fmt.validate();
  return fmt;
}

QuantizedBlock mxint_encode_block(std::span<const float> block, int bits) {
  QuantizedBlock out;
  out.mantissas.assign(block.size(), 0);
  float amax = 0.0f;
  for (float v : block) amax = std::max(amax, std::fabs(v));
  if (amax == 0.0f) return out;  // all-zero block, exponent 0 by convention

  int e = std::ilogb(amax) - (bits - 2);
  if (e < -126) return out;  // subnormal scale: flush block to zero
  e = std::min(e, 127);
  out.shared_exponent = e;

  const double scale = std::ldexp(1.0, e);
  const int32_t qmax = (1 << (bits - 1)) - 1;
  for (size_t i = 0; i < block.size(); ++i) {
    double m = round_even(static_cast<double>(block[i]) / scale);
    if (m > qmax) {
      m = qmax;
      ++out.saturation_count;
    } else if (m < -qmax) {
      m = -qmax;
      ++out.saturation_count;
    }
    out.mantissas[i] = static_cast<int32_t>(m);
  }
  return out;
}

std::vector<float> mxint_fake_quant(std::span<const float> values,
                                    const BlockFormat& fmt,
                                    int64_t* saturation_count) {
  fmt.validate();
  if (fmt.kind != FormatKind::mxint)
    throw InvalidFormat("mxint kernel invoked with a non-mxint format");
  std::vector<float> out(values.begin(), values.end());
  int64_t sat = 0;
  fake_quant_span_inplace(out, fmt, sat);
  if (saturation_count) *saturation_count = sat;
  return out;
}

std::vector<float> affine_fake_quant(std::span<const float> values,
                                     const BlockFormat& fmt,
                                     int64_t* saturation_count) {
  fmt.validate();
  if (fmt.kind != FormatKind::affine_int)
    throw InvalidFormat("affine kernel invoked with a non-affine format");
  std::vector<float> out(values.begin(), values.end());
  int64_t sat = 0;
  fake_quant_span_inplace(out, fmt, sat);
  if (saturation_count) *saturation_count = sat;
  return out;
}

std::vector<float> fake_quant(std::span<const float> values,
                              const BlockFormat& fmt,
                              int64_t* saturation_count) {
  return fmt.kind == FormatKind::mxint
             ? mxint_fake_quant(values, fmt, saturation_count)
             : affine_fake_quant(values, fmt, saturation_count);
}

void fake_quant_rows_inplace(std::span<float> values, int64_t rows,
                             int64_t cols, const BlockFormat& fmt,
                             int64_t* saturation_count) {
  if (rows < 0 || cols < 0 ||
      static_cast<size_t>(rows) * static_cast<size_t>(cols) != values.size())
    throw InvalidInput("row-wise quantization: rows*cols != value count");
  fmt.validate();
  int64_t sat = 0;
  for (int64_t r = 0; r < rows; ++r)
    fake_quant_span_inplace(
        values.subspan(static_cast<size_t>(r * cols),
                       static_cast<size_t>(cols)),
        fmt, sat);
  if (saturation_count) *saturation_count = sat;
}

QuantStats quant_error(std::span<const float> original,
                       std::span<const float> quantized,
                       int64_t saturation_count) {
  if (original.size() != quantized.size())
    throw InvalidInput("quant_error: length mismatch");
  QuantStats st;
  st.saturation_count = saturation_count;
  if (original.empty()) return st;
  double sum_sq = 0.0;
  for (size_t i = 0; i < original.size(); ++i) {
    const double d =
        static_cast<double>(original[i]) - static_cast<double>(quantized[i]);
    sum_sq += d * d;
    st.max_abs_err = std::max(st.max_abs_err, std::fabs(d));
  }
  st.mse = sum_sq / static_cast<double>(original.size());
  return st;
}

}  // namespace quantlaw
