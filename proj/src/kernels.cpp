/* Copyright 2026 The cashew-edge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "cashew/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "cashew/errors.hpp"

namespace cashew {

namespace {

inline float dot(const float* a, const float* b, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline std::int32_t dot(const std::int8_t* a, const std::int8_t* b, int n) {
  std::int32_t acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += static_cast<std::int32_t>(a[i]) * static_cast<std::int32_t>(b[i]);
  }
  return acc;
}

inline std::int32_t offset_dot(const std::int8_t* a, int a_zp, const std::int8_t* b,
                               int b_zp, int n) {
  std::int32_t acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += (static_cast<std::int32_t>(a[i]) - a_zp) *
           (static_cast<std::int32_t>(b[i]) - b_zp);
  }
  return acc;
}

inline float apply_activation(float v, Activation act) {
  return act == Activation::kRelu6 ? std::min(std::max(v, 0.0f), 6.0f) : v;
}

inline std::int8_t finish_int8(std::int32_t acc, const kernels::Int8Requant& rq) {
  const int q = requantize(acc, rq.multiplier, rq.output_zero_point);
  return static_cast<std::int8_t>(std::clamp(q, rq.act_min, rq.act_max));
}

#if defined(__SSE2__)
// Rounding (ties away from zero) of x * m / 2^shift on four int32 lanes,
// for 31 <= shift < 62 and m > 0: magnitudes go through the unsigned
// 32x32->64 multiply, and the result magnitude stays below 2^31.
struct FixedPointLanes {
  __m128i m, half, shift;
  explicit FixedPointLanes(const FixedPointMultiplier& fp)
      : m(_mm_set1_epi32(fp.mantissa)),
        half(_mm_set1_epi64x(std::int64_t{1} << (30 - fp.exponent))),
        shift(_mm_cvtsi32_si128(31 - fp.exponent)) {}
  static bool usable(const FixedPointMultiplier& fp) {
    return fp.mantissa > 0 && fp.exponent <= 0 && 31 - fp.exponent < 62;
  }
  __m128i apply(__m128i x) const {
    const __m128i low32 = _mm_set1_epi64x(0xffffffffLL);
    const __m128i sign = _mm_srai_epi32(x, 31);
    const __m128i mag = _mm_sub_epi32(_mm_xor_si128(x, sign), sign);
    __m128i even = _mm_mul_epu32(mag, m);
    __m128i odd = _mm_mul_epu32(_mm_srli_epi64(mag, 32), m);
    even = _mm_srl_epi64(_mm_add_epi64(even, half), shift);
    odd = _mm_srl_epi64(_mm_add_epi64(odd, half), shift);
    const __m128i r = _mm_or_si128(_mm_and_si128(even, low32), _mm_slli_epi64(odd, 32));
    return _mm_sub_epi32(_mm_xor_si128(r, sign), sign);
  }
};

// Sign-extends eight int8 values to two vectors of four int32.
inline void widen8(const std::int8_t* p, __m128i& lo, __m128i& hi) {
  const __m128i v = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(p));
  const __m128i w = _mm_srai_epi16(_mm_unpacklo_epi8(v, v), 8);
  lo = _mm_srai_epi32(_mm_unpacklo_epi16(w, w), 16);
  hi = _mm_srai_epi32(_mm_unpackhi_epi16(w, w), 16);
}

// Clamps eight int32 lanes to [lo, hi] (both within int8) and stores them.
inline void store8(std::int8_t* dst, __m128i a, __m128i b, __m128i lo16, __m128i hi16) {
  __m128i v = _mm_packs_epi32(a, b);
  v = _mm_min_epi16(_mm_max_epi16(v, lo16), hi16);
  _mm_storel_epi64(reinterpret_cast<__m128i*>(dst), _mm_packs_epi16(v, v));
}
#endif

// finish_int8 over a row of accumulators. Same result as the scalar
// path; the common right-shift case avoids its clamps and branches so the
// loop stays tight.
void finish_int8_row(const std::int32_t* acc, int n, const kernels::Int8Requant& rq,
                     std::int8_t* dst) {
  const int shift = 31 - rq.multiplier.exponent;
  if (shift <= 0 || shift >= 62) {
    for (int i = 0; i < n; ++i) dst[i] = finish_int8(acc[i], rq);
    return;
  }
  const std::int64_t m = rq.multiplier.mantissa;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  const std::int64_t zp = rq.output_zero_point;
  const std::int64_t lo = std::max(rq.act_min, kInt8Min);
  const std::int64_t hi = std::min(rq.act_max, kInt8Max);
  int i = 0;
#if defined(__SSE2__)
  if (FixedPointLanes::usable(rq.multiplier)) {
    const FixedPointLanes fp(rq.multiplier);
    const __m128i zpv = _mm_set1_epi32(static_cast<int>(zp));
    const __m128i lov = _mm_set1_epi16(static_cast<short>(lo));
    const __m128i hiv = _mm_set1_epi16(static_cast<short>(hi));
    for (; i + 8 <= n; i += 8) {
      const __m128i a = _mm_loadu_si128(reinterpret_cast<const __m128i*>(acc + i));
      const __m128i b = _mm_loadu_si128(reinterpret_cast<const __m128i*>(acc + i + 4));
      store8(dst + i, _mm_add_epi32(fp.apply(a), zpv), _mm_add_epi32(fp.apply(b), zpv), lov, hiv);
    }
  }
#endif
  for (; i < n; ++i) {
    const std::int64_t p = static_cast<std::int64_t>(acc[i]) * m;
    const std::int64_t mag = p < 0 ? -p : p;
    const std::int64_t r = (mag + half) >> shift;
    const std::int64_t v = (p < 0 ? -r : r) + zp;
    dst[i] = static_cast<std::int8_t>(v < lo ? lo : (v > hi ? hi : v));
  }
}

// acc[i] += x0 * w[2i] + x1 * w[2i + 1], products and sums exact in int32.
void madd_pairs(std::int32_t* acc, const std::int16_t* w, std::int16_t x0, std::int16_t x1,
                int n) {
  int i = 0;
#if defined(__SSE2__)
  const __m128i xx = _mm_set1_epi32(static_cast<int>(
      static_cast<std::uint16_t>(x0) | (static_cast<std::uint32_t>(static_cast<std::uint16_t>(x1)) << 16)));
  for (; i + 8 <= n; i += 8) {
    __m128i* a = reinterpret_cast<__m128i*>(acc + i);
    const __m128i* wv = reinterpret_cast<const __m128i*>(w + 2 * i);
    const __m128i p0 = _mm_madd_epi16(_mm_loadu_si128(wv), xx);
    const __m128i p1 = _mm_madd_epi16(_mm_loadu_si128(wv + 1), xx);
    _mm_storeu_si128(a, _mm_add_epi32(_mm_loadu_si128(a), p0));
    _mm_storeu_si128(a + 1, _mm_add_epi32(_mm_loadu_si128(a + 1), p1));
  }
#endif
  for (; i < n; ++i) {
    acc[i] += static_cast<std::int32_t>(x0) * w[2 * i] + static_cast<std::int32_t>(x1) * w[2 * i + 1];
  }
}

// Depthwise step over two taps at once: acc[c] += (a[c] - zi) * w[2c] +
// (b[c] - zi) * w[2c + 1]; a null tap contributes nothing.
void depthwise_tap_pair(std::int32_t* acc, const std::int8_t* a, const std::int8_t* b,
                        std::int32_t zi, const std::int16_t* w, int n) {
  int i = 0;
#if defined(__SSE2__)
  const __m128i vzi = _mm_set1_epi16(static_cast<short>(zi));
  const __m128i zero = _mm_setzero_si128();
  const auto widen = [&](const std::int8_t* p) {
    if (!p) return zero;
    const __m128i v = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(p));
    return _mm_sub_epi16(_mm_srai_epi16(_mm_unpacklo_epi8(v, v), 8), vzi);
  };
  for (; i + 8 <= n; i += 8) {
    const __m128i xa = widen(a ? a + i : nullptr);
    const __m128i xb = widen(b ? b + i : nullptr);
    const __m128i* wv = reinterpret_cast<const __m128i*>(w + 2 * i);
    __m128i* acc_v = reinterpret_cast<__m128i*>(acc + i);
    const __m128i p0 = _mm_madd_epi16(_mm_unpacklo_epi16(xa, xb), _mm_loadu_si128(wv));
    const __m128i p1 = _mm_madd_epi16(_mm_unpackhi_epi16(xa, xb), _mm_loadu_si128(wv + 1));
    _mm_storeu_si128(acc_v, _mm_add_epi32(_mm_loadu_si128(acc_v), p0));
    _mm_storeu_si128(acc_v + 1, _mm_add_epi32(_mm_loadu_si128(acc_v + 1), p1));
  }
#endif
  for (; i < n; ++i) {
    const std::int32_t xa = a ? a[i] - zi : 0;
    const std::int32_t xb = b ? b[i] - zi : 0;
    acc[i] += xa * w[2 * i] + xb * w[2 * i + 1];
  }
}

kernels::FeatureMap map_of(const Shape& nhwc) {
  return {nhwc[1], nhwc[2], nhwc[3]};
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.shape().rank() != rank) {
    throw ContractError(std::string(what) + " must have rank " +
                        std::to_string(rank) + ", got " + t.shape().to_string());
  }
}

bool is_int8_path(const Tensor& input) {
  if (input.dtype() == DType::kInt8) {
    input.require_qparams();
    return true;
  }
  if (input.dtype() != DType::kFloat32) {
    throw ContractError("kernel input must be float32 or int8");
  }
  return false;
}

const QuantParams& require_output(const std::optional<QuantParams>& out) {
  if (!out) throw ContractError("int8 kernel needs output quantization parameters");
  validate(*out);
  return *out;
}

void require_int8_operands(const Tensor& weights, const Tensor& bias) {
  if (weights.dtype() != DType::kInt8) {
    throw ContractError("int8 kernel needs int8 weights");
  }
  weights.require_qparams();
  if (bias.dtype() != DType::kInt32) {
    throw ContractError("int8 kernel needs an int32 bias");
  }
}

void require_float_operands(const Tensor& weights, const Tensor& bias) {
  if (!weights.is_float() || !bias.is_float()) {
    throw ContractError("float kernel needs float weights and bias");
  }
}

kernels::Int8Requant make_requant(const QuantParams& in, const QuantParams& w,
                                  const QuantParams& out, Activation act) {
  kernels::Int8Requant rq;
  rq.input_zero_point = in.zero_point;
  rq.weight_zero_point = w.zero_point;
  rq.multiplier = to_fixed_point(in.scale * w.scale / out.scale);
  rq.output_zero_point = out.zero_point;
  std::tie(rq.act_min, rq.act_max) = int8_activation_range(act, out);
  return rq;
}

}  // namespace

void validate(const ConvAttrs& attrs) {
  if (attrs.stride != 1 && attrs.stride != 2) {
    throw ContractError("convolution stride must be 1 or 2, got " +
                        std::to_string(attrs.stride));
  }
}

AxisGeometry conv_axis(int in, int kernel, int stride, Padding padding) {
  if (padding == Padding::kValid) {
    if (in < kernel) {
      throw ContractError("valid convolution needs input >= kernel");
    }
    return {(in - kernel) / stride + 1, 0};
  }
  const int out = (in + stride - 1) / stride;
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return {out, total / 2};
}

std::pair<int, int> int8_activation_range(Activation act, const QuantParams& out) {
  if (act == Activation::kNone) return {kInt8Min, kInt8Max};
  const int lo = std::clamp(out.zero_point, kInt8Min, kInt8Max);
  const int hi = quantize_value(6.0, out);
  return {lo, hi};
}

namespace kernels {

template <typename T>
static PackedFilter<T> pack_impl(std::span<const T> khkwio, const Shape& shape) {
  if (shape.rank() != 4 || khkwio.size() != shape.element_count()) {
    throw ContractError("filter must be Kh x Kw x Cin x Cout, got " + shape.to_string());
  }
  PackedFilter<T> f;
  f.kernel_h = shape[0];
  f.kernel_w = shape[1];
  f.in_channels = shape[2];
  f.out_channels = shape[3];
  f.data.assign(khkwio.begin(), khkwio.end());
  return f;
}

PackedFilter<float> pack_filter(std::span<const float> khkwio, const Shape& shape) {
  return pack_impl(khkwio, shape);
}

PackedFilter<std::int8_t> pack_filter(std::span<const std::int8_t> khkwio,
                                      const Shape& shape) {
  auto f = pack_impl(khkwio, shape);
  const int taps = f.kernel_h * f.kernel_w;
  const int pairs = (f.in_channels + 1) / 2;
  const auto cout = static_cast<std::size_t>(f.out_channels);
  f.widened.assign(static_cast<std::size_t>(taps) * pairs * cout * 2, 0);
  for (int t = 0; t < taps; ++t) {
    for (int ci = 0; ci < f.in_channels; ++ci) {
      const std::int8_t* src = f.data.data() + (static_cast<std::size_t>(t) * f.in_channels + ci) * cout;
      std::int16_t* dst = f.widened.data() +
          ((static_cast<std::size_t>(t) * pairs + ci / 2) * cout) * 2 + (ci % 2);
      for (std::size_t co = 0; co < cout; ++co) dst[2 * co] = src[co];
    }
  }
  return f;
}

Int8AddParams make_add_params(const QuantParams& a, const QuantParams& b,
                              const QuantParams& out) {
  const double twice_max = 2.0 * std::max(a.scale, b.scale);
  Int8AddParams p;
  p.a_zero_point = a.zero_point;
  p.b_zero_point = b.zero_point;
  p.output_zero_point = out.zero_point;
  p.a_multiplier = to_fixed_point(a.scale / twice_max);
  p.b_multiplier = to_fixed_point(b.scale / twice_max);
  p.output_multiplier =
      to_fixed_point(twice_max / (static_cast<double>(1 << Int8AddParams::kLeftShift) *
                                  out.scale));
  return p;
}

FeatureMap conv_output(const FeatureMap& in, int kernel_h, int kernel_w,
                       int out_channels, const ConvAttrs& attrs) {
  validate(attrs);
  const AxisGeometry y = conv_axis(in.height, kernel_h, attrs.stride, attrs.padding);
  const AxisGeometry x = conv_axis(in.width, kernel_w, attrs.stride, attrs.padding);
  return {y.out, x.out, out_channels};
}

void conv2d(std::span<const float> in, const FeatureMap& in_map,
            const PackedFilter<float>& filter, std::span<const float> bias,
            const ConvAttrs& attrs, std::span<float> out) {
  const AxisGeometry gy = conv_axis(in_map.height, filter.kernel_h, attrs.stride, attrs.padding);
  const AxisGeometry gx = conv_axis(in_map.width, filter.kernel_w, attrs.stride, attrs.padding);
  const int cin = filter.in_channels;
  const int cout = filter.out_channels;
  std::vector<float> acc(cout);
  for (int oy = 0; oy < gy.out; ++oy) {
    for (int ox = 0; ox < gx.out; ++ox) {
      std::copy(bias.begin(), bias.end(), acc.begin());
      for (int ky = 0; ky < filter.kernel_h; ++ky) {
        const int iy = oy * attrs.stride - gy.pad_before + ky;
        if (iy < 0 || iy >= in_map.height) continue;
        for (int kx = 0; kx < filter.kernel_w; ++kx) {
          const int ix = ox * attrs.stride - gx.pad_before + kx;
          if (ix < 0 || ix >= in_map.width) continue;
          const float* ip = in.data() + (static_cast<std::size_t>(iy) * in_map.width + ix) * cin;
          const float* wp = filter.data.data() +
              (static_cast<std::size_t>(ky) * filter.kernel_w + kx) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const float xv = ip[ci];
            if (xv == 0.0f) continue;
            const float* w = wp + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) acc[co] += xv * w[co];
          }
        }
      }
      float* dst = out.data() + (static_cast<std::size_t>(oy) * gx.out + ox) * cout;
      for (int co = 0; co < cout; ++co) dst[co] = apply_activation(acc[co], attrs.activation);
    }
  }
}

void conv2d(std::span<const std::int8_t> in, const FeatureMap& in_map,
            const PackedFilter<std::int8_t>& filter, std::span<const std::int32_t> bias,
            const ConvAttrs& attrs, const Int8Requant& rq, std::span<std::int8_t> out) {
  const AxisGeometry gy = conv_axis(in_map.height, filter.kernel_h, attrs.stride, attrs.padding);
  const AxisGeometry gx = conv_axis(in_map.width, filter.kernel_w, attrs.stride, attrs.padding);
  const int cin = filter.in_channels;
  const int cout = filter.out_channels;
  const std::int32_t zi = rq.input_zero_point;
  const std::int32_t zw = rq.weight_zero_point;
  // Paired 16-bit path: |x - zi| <= 255 and, with zw == 0, |w| <= 128.
  const bool narrow = zw == 0 && !filter.widened.empty();
  const int pairs = (cin + 1) / 2;
  std::vector<std::int32_t> acc(cout);
  for (int oy = 0; oy < gy.out; ++oy) {
    for (int ox = 0; ox < gx.out; ++ox) {
      std::copy(bias.begin(), bias.end(), acc.begin());
      for (int ky = 0; ky < filter.kernel_h; ++ky) {
        const int iy = oy * attrs.stride - gy.pad_before + ky;
        if (iy < 0 || iy >= in_map.height) continue;
        for (int kx = 0; kx < filter.kernel_w; ++kx) {
          const int ix = ox * attrs.stride - gx.pad_before + kx;
          if (ix < 0 || ix >= in_map.width) continue;
          const std::int8_t* ip =
              in.data() + (static_cast<std::size_t>(iy) * in_map.width + ix) * cin;
          if (narrow) {
            const std::size_t tap = static_cast<std::size_t>(ky) * filter.kernel_w + kx;
            const std::int16_t* wt = filter.widened.data() + tap * pairs * cout * 2;
            for (int cp = 0; cp < pairs; ++cp) {
              const int ci = 2 * cp;
              const auto x0 = static_cast<std::int16_t>(ip[ci] - zi);
              const auto x1 = static_cast<std::int16_t>(ci + 1 < cin ? ip[ci + 1] - zi : 0);
              if ((x0 | x1) == 0) continue;
              madd_pairs(acc.data(), wt + static_cast<std::size_t>(cp) * cout * 2, x0, x1, cout);
            }
            continue;
          }
          const std::size_t tap =
              (static_cast<std::size_t>(ky) * filter.kernel_w + kx) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const std::int32_t xv = static_cast<std::int32_t>(ip[ci]) - zi;
            if (xv == 0) continue;
            const std::int8_t* w = filter.data.data() + tap + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) {
              acc[co] += xv * (static_cast<std::int32_t>(w[co]) - zw);
            }
          }
        }
      }
      std::int8_t* dst = out.data() + (static_cast<std::size_t>(oy) * gx.out + ox) * cout;
      finish_int8_row(acc.data(), cout, rq, dst);
    }
  }
}

void depthwise_conv2d(std::span<const float> in, const FeatureMap& in_map,
                      std::span<const float> weights, int kernel_h, int kernel_w,
                      std::span<const float> bias, const ConvAttrs& attrs,
                      std::span<float> out) {
  const AxisGeometry gy = conv_axis(in_map.height, kernel_h, attrs.stride, attrs.padding);
  const AxisGeometry gx = conv_axis(in_map.width, kernel_w, attrs.stride, attrs.padding);
  const int c = in_map.channels;
  std::vector<float> acc(c);
  for (int oy = 0; oy < gy.out; ++oy) {
    for (int ox = 0; ox < gx.out; ++ox) {
      std::copy(bias.begin(), bias.end(), acc.begin());
      for (int ky = 0; ky < kernel_h; ++ky) {
        const int iy = oy * attrs.stride - gy.pad_before + ky;
        if (iy < 0 || iy >= in_map.height) continue;
        for (int kx = 0; kx < kernel_w; ++kx) {
          const int ix = ox * attrs.stride - gx.pad_before + kx;
          if (ix < 0 || ix >= in_map.width) continue;
          const float* ip = in.data() + (static_cast<std::size_t>(iy) * in_map.width + ix) * c;
          const float* wp = weights.data() + (static_cast<std::size_t>(ky) * kernel_w + kx) * c;
          for (int ch = 0; ch < c; ++ch) acc[ch] += ip[ch] * wp[ch];
        }
      }
      float* dst = out.data() + (static_cast<std::size_t>(oy) * gx.out + ox) * c;
      for (int ch = 0; ch < c; ++ch) dst[ch] = apply_activation(acc[ch], attrs.activation);
    }
  }
}

void depthwise_conv2d(std::span<const std::int8_t> in, const FeatureMap& in_map,
                      std::span<const std::int8_t> weights, int kernel_h, int kernel_w,
                      std::span<const std::int32_t> bias, const ConvAttrs& attrs,
                      const Int8Requant& rq, std::span<std::int8_t> out) {
  const AxisGeometry gy = conv_axis(in_map.height, kernel_h, attrs.stride, attrs.padding);
  const AxisGeometry gx = conv_axis(in_map.width, kernel_w, attrs.stride, attrs.padding);
  const int c = in_map.channels;
  const std::int32_t zi = rq.input_zero_point;
  const std::int32_t zw = rq.weight_zero_point;
  const int taps = kernel_h * kernel_w;
  const int pairs = (taps + 1) / 2;
  // Taps interleaved in pairs per channel: [pair][channel][2], weight
  // offset already removed (|w - zw| <= 255 keeps int16 exact).
  std::vector<std::int16_t> wpairs(static_cast<std::size_t>(pairs) * c * 2, 0);
  for (int t = 0; t < taps; ++t) {
    for (int ch = 0; ch < c; ++ch) {
      wpairs[(static_cast<std::size_t>(t / 2) * c + ch) * 2 + t % 2] =
          static_cast<std::int16_t>(weights[static_cast<std::size_t>(t) * c + ch] - zw);
    }
  }
  std::vector<const std::int8_t*> tap_in(static_cast<std::size_t>(pairs) * 2, nullptr);
  std::vector<std::int32_t> acc(c);
  for (int oy = 0; oy < gy.out; ++oy) {
    for (int ox = 0; ox < gx.out; ++ox) {
      std::copy(bias.begin(), bias.end(), acc.begin());
      for (int ky = 0; ky < kernel_h; ++ky) {
        const int iy = oy * attrs.stride - gy.pad_before + ky;
        for (int kx = 0; kx < kernel_w; ++kx) {
          const int ix = ox * attrs.stride - gx.pad_before + kx;
          const bool inside = iy >= 0 && iy < in_map.height && ix >= 0 && ix < in_map.width;
          tap_in[static_cast<std::size_t>(ky) * kernel_w + kx] =
              inside ? in.data() + (static_cast<std::size_t>(iy) * in_map.width + ix) * c
                     : nullptr;
        }
      }
      for (int p = 0; p < pairs; ++p) {
        const std::int8_t* a = tap_in[2 * p];
        const std::int8_t* b = tap_in[2 * p + 1];
        if (!a && !b) continue;
        depthwise_tap_pair(acc.data(), a, b, zi,
                           wpairs.data() + static_cast<std::size_t>(p) * c * 2, c);
      }
      std::int8_t* dst = out.data() + (static_cast<std::size_t>(oy) * gx.out + ox) * c;
      finish_int8_row(acc.data(), c, rq, dst);
    }
  }
}

void fully_connected(std::span<const float> in, std::span<const float> weights_oi,
                     std::span<const float> bias, Activation activation,
                     std::span<float> out) {
  const int n_in = static_cast<int>(in.size());
  for (std::size_t o = 0; o < out.size(); ++o) {
    const float acc = bias[o] + dot(in.data(), weights_oi.data() + o * n_in, n_in);
    out[o] = apply_activation(acc, activation);
  }
}

void fully_connected(std::span<const std::int8_t> in,
                     std::span<const std::int8_t> weights_oi,
                     std::span<const std::int32_t> row_sums,
                     std::span<const std::int32_t> bias, const Int8Requant& rq,
                     std::span<std::int8_t> out) {
  const int n_in = static_cast<int>(in.size());
  for (std::size_t o = 0; o < out.size(); ++o) {
    const std::int8_t* w = weights_oi.data() + o * n_in;
    std::int32_t acc = bias[o];
    if (rq.weight_zero_point == 0 && !row_sums.empty()) {
      acc += dot(in.data(), w, n_in) - rq.input_zero_point * row_sums[o];
    } else {
      acc += offset_dot(in.data(), rq.input_zero_point, w, rq.weight_zero_point, n_in);
    }
    out[o] = finish_int8(acc, rq);
  }
}

void global_avg_pool(std::span<const float> in, const FeatureMap& in_map,
                     std::span<float> out) {
  const int c = in_map.channels;
  const std::size_t pixels = static_cast<std::size_t>(in_map.height) * in_map.width;
  std::vector<float> sum(c, 0.0f);
  for (std::size_t p = 0; p < pixels; ++p) {
    const float* ip = in.data() + p * c;
    for (int ch = 0; ch < c; ++ch) sum[ch] += ip[ch];
  }
  for (int ch = 0; ch < c; ++ch) out[ch] = sum[ch] / static_cast<float>(pixels);
}

void global_avg_pool(std::span<const std::int8_t> in, const FeatureMap& in_map,
                     std::span<std::int8_t> out) {
  const int c = in_map.channels;
  const std::size_t pixels = static_cast<std::size_t>(in_map.height) * in_map.width;
  std::vector<std::int32_t> sum(c, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::int8_t* ip = in.data() + p * c;
    for (int ch = 0; ch < c; ++ch) sum[ch] += ip[ch];
  }
  for (int ch = 0; ch < c; ++ch) {
    out[ch] = static_cast<std::int8_t>(
        std::clamp(rounded_divide(sum[ch], static_cast<std::int64_t>(pixels)),
                   kInt8Min, kInt8Max));
  }
}

void add(std::span<const float> a, std::span<const float> b, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void add(std::span<const std::int8_t> a, std::span<const std::int8_t> b,
         const Int8AddParams& params, std::span<std::int8_t> out) {
  std::size_t i = 0;
#if defined(__SSE2__)
  // Shifted inputs stay below 2^28 and each rescaled term below 2^28, so
  // every stage fits the four-lane fixed-point path.
  if (FixedPointLanes::usable(params.a_multiplier) &&
      FixedPointLanes::usable(params.b_multiplier) &&
      FixedPointLanes::usable(params.output_multiplier)) {
    const FixedPointLanes ma(params.a_multiplier), mb(params.b_multiplier),
        mo(params.output_multiplier);
    const __m128i za = _mm_set1_epi32(params.a_zero_point);
    const __m128i zb = _mm_set1_epi32(params.b_zero_point);
    const __m128i zo = _mm_set1_epi32(params.output_zero_point);
    const __m128i lo = _mm_set1_epi16(kInt8Min), hi = _mm_set1_epi16(kInt8Max);
    const auto lane = [&](__m128i x, __m128i y) {
      const __m128i sa = ma.apply(_mm_slli_epi32(_mm_sub_epi32(x, za), Int8AddParams::kLeftShift));
      const __m128i sb = mb.apply(_mm_slli_epi32(_mm_sub_epi32(y, zb), Int8AddParams::kLeftShift));
      return _mm_add_epi32(mo.apply(_mm_add_epi32(sa, sb)), zo);
    };
    for (; i + 8 <= out.size(); i += 8) {
      __m128i a0, a1, b0, b1;
      widen8(a.data() + i, a0, a1);
      widen8(b.data() + i, b0, b1);
      store8(out.data() + i, lane(a0, b0), lane(a1, b1), lo, hi);
    }
  }
#endif
  for (; i < out.size(); ++i) {
    const std::int64_t sa = multiply_by_fixed_point(
        (static_cast<std::int64_t>(a[i]) - params.a_zero_point) << Int8AddParams::kLeftShift,
        params.a_multiplier);
    const std::int64_t sb = multiply_by_fixed_point(
        (static_cast<std::int64_t>(b[i]) - params.b_zero_point) << Int8AddParams::kLeftShift,
        params.b_multiplier);
    const std::int64_t r =
        multiply_by_fixed_point(sa + sb, params.output_multiplier) + params.output_zero_point;
    out[i] = static_cast<std::int8_t>(std::clamp<std::int64_t>(r, kInt8Min, kInt8Max));
  }
}

void relu6(std::span<float> values) {
  for (float& v : values) v = std::min(std::max(v, 0.0f), 6.0f);
}

void softmax(std::span<const float> logits, std::span<float> out) {
  float peak = logits[0];
  for (float v : logits) {
    if (!std::isfinite(v)) throw DomainError("softmax input is not finite");
    peak = std::max(peak, v);
  }
  double total = 0.0;
  std::vector<double> e(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += e[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<float>(e[i] / total);
  }
}

}  // namespace kernels

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvAttrs& attrs, const std::optional<QuantParams>& output_params) {
  require_rank(input, 4, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  validate(attrs);
  const Shape& ws = weights.shape();
  if (ws[2] != input.shape()[3]) {
    throw ContractError("conv2d channel mismatch: input has " +
                        std::to_string(input.shape()[3]) + ", weights expect " +
                        std::to_string(ws[2]));
  }
  if (bias.size() != static_cast<std::size_t>(ws[3])) {
    throw ContractError("conv2d bias length must equal output channels");
  }
  const kernels::FeatureMap in_map = map_of(input.shape());
  const kernels::FeatureMap out_map = kernels::conv_output(in_map, ws[0], ws[1], ws[3], attrs);
  const int batch = input.shape()[0];
  const Shape out_shape{batch, out_map.height, out_map.width, out_map.channels};

  if (is_int8_path(input)) {
    require_int8_operands(weights, bias);
    const QuantParams& out_p = require_output(output_params);
    const auto rq = make_requant(*input.qparams(), *weights.qparams(), out_p, attrs.activation);
    const auto filter = kernels::pack_filter(weights.int8s(), ws);
    std::vector<std::int8_t> out(out_shape.element_count());
    for (int n = 0; n < batch; ++n) {
      kernels::conv2d(input.int8s().subspan(n * in_map.size(), in_map.size()), in_map,
                      filter, bias.int32s(), attrs, rq,
                      std::span(out).subspan(n * out_map.size(), out_map.size()));
    }
    return Tensor(out_shape, std::move(out), out_p);
  }
  require_float_operands(weights, bias);
  const auto filter = kernels::pack_filter(weights.floats(), ws);
  std::vector<float> out(out_shape.element_count());
  for (int n = 0; n < batch; ++n) {
    kernels::conv2d(input.floats().subspan(n * in_map.size(), in_map.size()), in_map,
                    filter, bias.floats(), attrs,
                    std::span(out).subspan(n * out_map.size(), out_map.size()));
  }
  return Tensor(out_shape, std::move(out));
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                        const ConvAttrs& attrs,
                        const std::optional<QuantParams>& output_params) {
  require_rank(input, 4, "depthwise input");
  require_rank(weights, 4, "depthwise weights");
  validate(attrs);
  const Shape& ws = weights.shape();
  const int channels = input.shape()[3];
  if (ws[2] != 1 || ws[3] != channels) {
    throw ContractError("depthwise weights must be Kh x Kw x 1 x " +
                        std::to_string(channels) + ", got " + ws.to_string());
  }
  if (bias.size() != static_cast<std::size_t>(channels)) {
    throw ContractError("depthwise bias length must equal channel count");
  }
  const kernels::FeatureMap in_map = map_of(input.shape());
  const kernels::FeatureMap out_map = kernels::conv_output(in_map, ws[0], ws[1], channels, attrs);
  const int batch = input.shape()[0];
  const Shape out_shape{batch, out_map.height, out_map.width, channels};

  if (is_int8_path(input)) {
    require_int8_operands(weights, bias);
    const QuantParams& out_p = require_output(output_params);
    const auto rq = make_requant(*input.qparams(), *weights.qparams(), out_p, attrs.activation);
    std::vector<std::int8_t> out(out_shape.element_count());
    for (int n = 0; n < batch; ++n) {
      kernels::depthwise_conv2d(input.int8s().subspan(n * in_map.size(), in_map.size()),
                                in_map, weights.int8s(), ws[0], ws[1], bias.int32s(), attrs,
                                rq, std::span(out).subspan(n * out_map.size(), out_map.size()));
    }
    return Tensor(out_shape, std::move(out), out_p);
  }
  require_float_operands(weights, bias);
  std::vector<float> out(out_shape.element_count());
  for (int n = 0; n < batch; ++n) {
    kernels::depthwise_conv2d(input.floats().subspan(n * in_map.size(), in_map.size()),
                              in_map, weights.floats(), ws[0], ws[1], bias.floats(), attrs,
                              std::span(out).subspan(n * out_map.size(), out_map.size()));
  }
  return Tensor(out_shape, std::move(out));
}

Tensor relu6(const Tensor& x) {
  if (!x.is_float()) throw ContractError("relu6 takes a float tensor");
  Tensor out = x;
  kernels::relu6(out.floats());
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool input");
  const kernels::FeatureMap in_map = map_of(input.shape());
  const int batch = input.shape()[0];
  const Shape out_shape{batch, 1, 1, in_map.channels};
  const auto c = static_cast<std::size_t>(in_map.channels);
  if (is_int8_path(input)) {
    std::vector<std::int8_t> out(out_shape.element_count());
    for (int n = 0; n < batch; ++n) {
      kernels::global_avg_pool(input.int8s().subspan(n * in_map.size(), in_map.size()),
                               in_map, std::span(out).subspan(n * c, c));
    }
    return Tensor(out_shape, std::move(out), *input.qparams());
  }
  std::vector<float> out(out_shape.element_count());
  for (int n = 0; n < batch; ++n) {
    kernels::global_avg_pool(input.floats().subspan(n * in_map.size(), in_map.size()),
                             in_map, std::span(out).subspan(n * c, c));
  }
  return Tensor(out_shape, std::move(out));
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias,
                       Activation activation,
                       const std::optional<QuantParams>& output_params) {
  require_rank(weights, 2, "dense weights");
  const int n_in = weights.shape()[0];
  const int n_out = weights.shape()[1];
  if (input.size() % static_cast<std::size_t>(n_in) != 0) {
    throw ContractError("dense input size " + std::to_string(input.size()) +
                        " is not a multiple of " + std::to_string(n_in));
  }
  if (bias.size() != static_cast<std::size_t>(n_out)) {
    throw ContractError("dense bias length must equal output units");
  }
  const int rows = static_cast<int>(input.size() / n_in);
  const Shape out_shape{rows, n_out};
  const auto in_len = static_cast<std::size_t>(n_in);
  const auto out_len = static_cast<std::size_t>(n_out);

  if (is_int8_path(input)) {
    require_int8_operands(weights, bias);
    const QuantParams& out_p = require_output(output_params);
    const auto rq = make_requant(*input.qparams(), *weights.qparams(), out_p, activation);
    const auto w = weights.int8s();
    std::vector<std::int8_t> packed(w.size());
    std::vector<std::int32_t> row_sums(out_len, 0);
    for (std::size_t i = 0; i < in_len; ++i)
      for (std::size_t o = 0; o < out_len; ++o) {
        packed[o * in_len + i] = w[i * out_len + o];
        row_sums[o] += w[i * out_len + o];
      }
    std::vector<std::int8_t> out(out_shape.element_count());
    for (int r = 0; r < rows; ++r) {
      kernels::fully_connected(input.int8s().subspan(r * in_len, in_len), packed, row_sums,
                               bias.int32s(), rq, std::span(out).subspan(r * out_len, out_len));
    }
    return Tensor(out_shape, std::move(out), out_p);
  }
  require_float_operands(weights, bias);
  const auto w = weights.floats();
  std::vector<float> packed(w.size());
  for (std::size_t i = 0; i < in_len; ++i)
    for (std::size_t o = 0; o < out_len; ++o) packed[o * in_len + i] = w[i * out_len + o];
  std::vector<float> out(out_shape.element_count());
  for (int r = 0; r < rows; ++r) {
    kernels::fully_connected(input.floats().subspan(r * in_len, in_len), packed,
                             bias.floats(), activation,
                             std::span(out).subspan(r * out_len, out_len));
  }
  return Tensor(out_shape, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b, const std::optional<QuantParams>& output_params) {
  if (a.shape() != b.shape()) {
    throw ContractError("add operands differ in shape: " + a.shape().to_string() +
                        " vs " + b.shape().to_string());
  }
  if (is_int8_path(a)) {
    if (b.dtype() != DType::kInt8) throw ContractError("add operands differ in dtype");
    const QuantParams& out_p = require_output(output_params);
    const auto params = kernels::make_add_params(*a.qparams(), b.require_qparams(), out_p);
    std::vector<std::int8_t> out(a.size());
    kernels::add(a.int8s(), b.int8s(), params, out);
    return Tensor(a.shape(), std::move(out), out_p);
  }
  std::vector<float> out(a.size());
  kernels::add(a.floats(), b.floats(), out);
  return Tensor(a.shape(), std::move(out));
}

Tensor softmax(const Tensor& logits) {
  if (!logits.is_float()) {
    throw ContractError("softmax takes float logits; dequantize int8 logits first");
  }
  // Normalizes along the last axis.
  const auto width = static_cast<std::size_t>(logits.shape().dims().back());
  std::vector<float> out(logits.size());
  for (std::size_t r = 0; r < logits.size() / width; ++r) {
    kernels::softmax(logits.floats().subspan(r * width, width),
                     std::span(out).subspan(r * width, width));
  }
  return Tensor(logits.shape(), std::move(out));
}

Tensor dropout_inference(const Tensor& x, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("dropout rate must be in [0, 1)");
  }
  return x;
}

}  // namespace cashew
