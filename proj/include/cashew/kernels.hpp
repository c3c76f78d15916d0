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
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cashew/tensor.hpp"

namespace cashew {

enum class Padding { kSame, kValid };
enum class Activation { kNone, kRelu6 };

struct ConvAttrs {
  int stride = 1;  // 1 or 2
  Padding padding = Padding::kSame;
  Activation activation = Activation::kNone;
};

void validate(const ConvAttrs& attrs);

// Output extent and leading padding of one spatial axis. "same" pads a
// total of max((ceil(in/stride) - 1) * stride + k - in, 0) cells, with the
// odd cell going to the bottom/right.
struct AxisGeometry {
  int out = 0;
  int pad_before = 0;
};

AxisGeometry conv_axis(int in, int kernel, int stride, Padding padding);

// Int8 codes that correspond to the fused activation's real bounds.
std::pair<int, int> int8_activation_range(Activation act, const QuantParams& out);

// ---------------------------------------------------------------------------
// Tensor-level entry points. Float inputs take the float path; int8 inputs
// take the integer path and then need `output_params`, int8 weights and an
// int32 bias at scale in_scale * w_scale.
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvAttrs& attrs,
              const std::optional<QuantParams>& output_params = std::nullopt);

// Weights are Kh x Kw x 1 x C; channel multiplier is fixed at 1.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& weights,
                        const Tensor& bias, const ConvAttrs& attrs,
                        const std::optional<QuantParams>& output_params = std::nullopt);

Tensor relu6(const Tensor& x);

// N x H x W x C -> N x 1 x 1 x C. The int8 result keeps the input's
// QuantParams.
Tensor global_avg_pool(const Tensor& input);

// Treats the input as rows of length In (weights are In x Out); returns
// Rows x Out.
Tensor fully_connected(const Tensor& input, const Tensor& weights,
                       const Tensor& bias, Activation activation,
                       const std::optional<QuantParams>& output_params = std::nullopt);

// Elementwise sum of two equally shaped tensors (residual connection).
Tensor add(const Tensor& a, const Tensor& b,
           const std::optional<QuantParams>& output_params = std::nullopt);

// Float only; int8 logits must be dequantized first.
Tensor softmax(const Tensor& logits);

Tensor dropout_inference(const Tensor& x, double rate);

// ---------------------------------------------------------------------------
// Span-level cores. These write into caller-owned memory so the executor
// can run every layer inside one planned arena. Batch size is 1.
// ---------------------------------------------------------------------------
namespace kernels {

struct FeatureMap {
  int height = 1;
  int width = 1;
  int channels = 1;
  std::size_t size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
};

// Convolution filter in [Kh][Kw][Cin][Cout] order: the innermost loop runs
// across output channels over contiguous weights and accumulators.
template <typename T>
struct PackedFilter {
  int kernel_h = 1;
  int kernel_w = 1;
  int in_channels = 1;
  int out_channels = 1;
  std::vector<T> data;
  // int8 only: the codes widened to int16 with input channels interleaved
  // in pairs, [Kh][Kw][Cin/2][Cout][2], for a paired 16-bit multiply-add.
  // An odd Cin is padded with a zero row.
  std::vector<std::int16_t> widened;
};

PackedFilter<float> pack_filter(std::span<const float> khkwio, const Shape& shape);
PackedFilter<std::int8_t> pack_filter(std::span<const std::int8_t> khkwio,
                                      const Shape& shape);

struct Int8Requant {
  int input_zero_point = 0;
  int weight_zero_point = 0;
  FixedPointMultiplier multiplier;
  int output_zero_point = 0;
  int act_min = kInt8Min;
  int act_max = kInt8Max;
};

struct Int8AddParams {
  int a_zero_point = 0;
  int b_zero_point = 0;
  int output_zero_point = 0;
  FixedPointMultiplier a_multiplier;
  FixedPointMultiplier b_multiplier;
  FixedPointMultiplier output_multiplier;
  static constexpr int kLeftShift = 20;
};

Int8AddParams make_add_params(const QuantParams& a, const QuantParams& b,
                              const QuantParams& out);

FeatureMap conv_output(const FeatureMap& in, int kernel_h, int kernel_w,
                       int out_channels, const ConvAttrs& attrs);

void conv2d(std::span<const float> in, const FeatureMap& in_map,
            const PackedFilter<float>& filter, std::span<const float> bias,
            const ConvAttrs& attrs, std::span<float> out);
void conv2d(std::span<const std::int8_t> in, const FeatureMap& in_map,
            const PackedFilter<std::int8_t>& filter, std::span<const std::int32_t> bias,
            const ConvAttrs& attrs, const Int8Requant& rq, std::span<std::int8_t> out);

// Depthwise weights stay in their natural Kh x Kw x C order.
void depthwise_conv2d(std::span<const float> in, const FeatureMap& in_map,
                      std::span<const float> weights, int kernel_h, int kernel_w,
                      std::span<const float> bias, const ConvAttrs& attrs,
                      std::span<float> out);
void depthwise_conv2d(std::span<const std::int8_t> in, const FeatureMap& in_map,
                      std::span<const std::int8_t> weights, int kernel_h, int kernel_w,
                      std::span<const std::int32_t> bias, const ConvAttrs& attrs,
                      const Int8Requant& rq, std::span<std::int8_t> out);

// Dense weights as [Out][In].
void fully_connected(std::span<const float> in, std::span<const float> weights_oi,
                     std::span<const float> bias, Activation activation,
                     std::span<float> out);
void fully_connected(std::span<const std::int8_t> in,
                     std::span<const std::int8_t> weights_oi,
                     std::span<const std::int32_t> row_sums,
                     std::span<const std::int32_t> bias, const Int8Requant& rq,
                     std::span<std::int8_t> out);

void global_avg_pool(std::span<const float> in, const FeatureMap& in_map,
                     std::span<float> out);
void global_avg_pool(std::span<const std::int8_t> in, const FeatureMap& in_map,
                     std::span<std::int8_t> out);

void add(std::span<const float> a, std::span<const float> b, std::span<float> out);
void add(std::span<const std::int8_t> a, std::span<const std::int8_t> b,
         const Int8AddParams& params, std::span<std::int8_t> out);

void relu6(std::span<float> values);

void softmax(std::span<const float> logits, std::span<float> out);

}  // namespace kernels

}  // namespace cashew
