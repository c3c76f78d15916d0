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
// Deliberately naive reference implementations. They share no code with
// the library beyond plain data types, so agreement is a real check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// Round half away from zero of n / 2^shift, exact via 128-bit arithmetic.
inline std::int64_t round_shift(__int128 n, int shift) {
  const __int128 d = static_cast<__int128>(1) << shift;
  const bool neg = n < 0;
  const __int128 a = neg ? -n : n;
  const __int128 q = (a + d / 2) / d;
  return static_cast<std::int64_t>(neg ? -q : q);
}

// Real multiplier m applied to acc as mantissa * 2^(exponent - 31).
inline std::int64_t scale_fixed(std::int64_t acc, std::int32_t mantissa, int exponent) {
  return round_shift(static_cast<__int128>(acc) * mantissa, 31 - exponent);
}

inline int clamp8(std::int64_t v, int lo = -128, int hi = 127) {
  return static_cast<int>(std::clamp<std::int64_t>(v, lo, hi));
}

inline int quantize(double x, double scale, int zp) {
  const double r = x / scale;
  const double t = r < 0 ? -std::floor(-r + 0.5) : std::floor(r + 0.5);
  return clamp8(static_cast<std::int64_t>(t) + zp);
}

struct Geometry {
  int out;
  int pad;
};

inline Geometry axis(int in, int k, int stride, bool same) {
  if (!same) return {(in - k) / stride + 1, 0};
  int out = 0;
  while (out * stride < in) ++out;
  int total = (out - 1) * stride + k - in;
  if (total < 0) total = 0;
  return {out, total / 2};
}

// NHWC float cross-correlation, batch 1, weights [kh][kw][ci][co].
inline std::vector<double> conv_f(const std::vector<float>& x, int h, int w, int ci,
                                  const std::vector<float>& wt, int kh, int kw, int co,
                                  const std::vector<float>& bias, int stride, bool same,
                                  bool relu6, int* oh_out = nullptr, int* ow_out = nullptr) {
  const Geometry gy = axis(h, kh, stride, same), gx = axis(w, kw, stride, same);
  std::vector<double> y(static_cast<std::size_t>(gy.out) * gx.out * co);
  for (int oy = 0; oy < gy.out; ++oy)
    for (int ox = 0; ox < gx.out; ++ox)
      for (int o = 0; o < co; ++o) {
        double acc = bias[o];
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx)
            for (int c = 0; c < ci; ++c) {
              const int iy = oy * stride + ky - gy.pad, ix = ox * stride + kx - gx.pad;
              if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
              acc += static_cast<double>(x[(iy * w + ix) * ci + c]) *
                     wt[((ky * kw + kx) * ci + c) * co + o];
            }
        if (relu6) acc = std::min(std::max(acc, 0.0), 6.0);
        y[(oy * gx.out + ox) * co + o] = acc;
      }
  if (oh_out) *oh_out = gy.out;
  if (ow_out) *ow_out = gx.out;
  return y;
}

struct Requant {
  int zin, zw, zout;
  std::int32_t mantissa;
  int exponent;
  int lo, hi;
};

inline std::vector<int> conv_q(const std::vector<std::int8_t>& x, int h, int w, int ci,
                               const std::vector<std::int8_t>& wt, int kh, int kw, int co,
                               const std::vector<std::int32_t>& bias, int stride, bool same,
                               const Requant& r) {
  const Geometry gy = axis(h, kh, stride, same), gx = axis(w, kw, stride, same);
  std::vector<int> y(static_cast<std::size_t>(gy.out) * gx.out * co);
  for (int oy = 0; oy < gy.out; ++oy)
    for (int ox = 0; ox < gx.out; ++ox)
      for (int o = 0; o < co; ++o) {
        std::int64_t acc = bias[o];
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx)
            for (int c = 0; c < ci; ++c) {
              const int iy = oy * stride + ky - gy.pad, ix = ox * stride + kx - gx.pad;
              if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
              acc += static_cast<std::int64_t>(x[(iy * w + ix) * ci + c] - r.zin) *
                     (wt[((ky * kw + kx) * ci + c) * co + o] - r.zw);
            }
        y[(oy * gx.out + ox) * co + o] =
            clamp8(scale_fixed(acc, r.mantissa, r.exponent) + r.zout, r.lo, r.hi);
      }
  return y;
}

// Depthwise expressed through the dense oracle with a block-diagonal filter.
template <typename T>
std::vector<T> expand_depthwise(const std::vector<T>& wt, int kh, int kw, int c, T zero) {
  std::vector<T> full(static_cast<std::size_t>(kh) * kw * c * c, zero);
  for (int t = 0; t < kh * kw; ++t)
    for (int ch = 0; ch < c; ++ch) full[(t * c + ch) * c + ch] = wt[t * c + ch];
  return full;
}

inline std::vector<double> dense_f(const std::vector<float>& x, const std::vector<float>& w,
                                   const std::vector<float>& b, int in, int out, bool relu6) {
  std::vector<double> y(out);
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    for (int i = 0; i < in; ++i) acc += static_cast<double>(x[i]) * w[i * out + o];
    if (relu6) acc = std::min(std::max(acc, 0.0), 6.0);
    y[o] = acc;
  }
  return y;
}

inline std::vector<int> dense_q(const std::vector<std::int8_t>& x,
                                const std::vector<std::int8_t>& w,
                                const std::vector<std::int32_t>& b, int in, int out,
                                const Requant& r) {
  std::vector<int> y(out);
  for (int o = 0; o < out; ++o) {
    std::int64_t acc = b[o];
    for (int i = 0; i < in; ++i)
      acc += static_cast<std::int64_t>(x[i] - r.zin) * (w[i * out + o] - r.zw);
    y[o] = clamp8(scale_fixed(acc, r.mantissa, r.exponent) + r.zout, r.lo, r.hi);
  }
  return y;
}

inline std::vector<double> pool_f(const std::vector<float>& x, int h, int w, int c) {
  std::vector<double> y(c, 0.0);
  for (int p = 0; p < h * w; ++p)
    for (int ch = 0; ch < c; ++ch) y[ch] += x[p * c + ch];
  for (auto& v : y) v /= h * w;
  return y;
}

inline std::vector<int> pool_q(const std::vector<std::int8_t>& x, int h, int w, int c) {
  std::vector<int> y(c);
  for (int ch = 0; ch < c; ++ch) {
    std::int64_t s = 0;
    for (int p = 0; p < h * w; ++p) s += x[p * c + ch];
    const std::int64_t n = h * w;
    const std::int64_t a = s < 0 ? -s : s;
    const std::int64_t q = (2 * a + n) / (2 * n);
    y[ch] = clamp8(s < 0 ? -q : q);
  }
  return y;
}

}  // namespace oracle
