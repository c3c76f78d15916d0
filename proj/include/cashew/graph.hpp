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
#include <map>
#include <string>
#include <vector>

#include "cashew/kernels.hpp"
#include "cashew/tensor.hpp"

namespace cashew {

enum class LayerKind {
  kConv,
  kDepthwiseConv,
  kInvertedResidual,
  kGlobalAvgPool,
  kDense,
  kDropout,
  kSoftmax,
};

const char* layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

// One entry of the layer table. Which fields matter depends on `kind`:
//   Conv              filters, kernel, stride, padding, activation
//   DepthwiseConv     kernel, stride, padding, activation
//   InvertedResidual  expansion, stride, filters, residual
//   Dense             filters (units), activation
//   Dropout           rate
struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::string name;
  int filters = 0;
  int kernel = 3;
  int stride = 1;
  Padding padding = Padding::kSame;
  Activation activation = Activation::kNone;
  int expansion = 1;
  bool residual = false;
  double rate = 0.0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

LayerSpec conv_layer(std::string name, int filters, int kernel, int stride,
                     Activation act = Activation::kRelu6);
LayerSpec depthwise_layer(std::string name, int kernel, int stride,
                          Activation act = Activation::kRelu6);
LayerSpec inverted_residual_layer(std::string name, int expansion, int stride,
                                  int filters, bool residual);
LayerSpec pool_layer(std::string name);
LayerSpec dense_layer(std::string name, int units, Activation act = Activation::kNone);
LayerSpec dropout_layer(std::string name, double rate);
LayerSpec softmax_layer(std::string name);

enum class NumericMode { kFloat32, kInt8 };

const char* numeric_mode_name(NumericMode mode);

// A sequential network plus everything needed to run it. Weight tensors
// are named "<op>/weights" and "<op>/bias", where <op> is the layer name
// or, inside an inverted residual, "<layer>/expand", "<layer>/depthwise"
// and "<layer>/project". Activation tensors are named after the op that
// produces them; the graph input is "input".
struct ModelGraph {
  Shape input_shape{1, 96, 96, 3};
  std::vector<LayerSpec> layers;
  std::map<std::string, Tensor> weights;
  NumericMode mode = NumericMode::kFloat32;
  // int8 only: one entry per activation tensor except the softmax output.
  std::map<std::string, QuantParams> activation_params;
  // int8 only: in_scale * w_scale / out_scale per conv/dense op.
  std::map<std::string, FixedPointMultiplier> requant_multipliers;
  std::vector<std::string> class_labels;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

// ---------------------------------------------------------------------------
// Lowering: the layer table expanded into primitive ops over named tensors.
// Every consumer (arena planner, executor, calibration, conversion) walks
// this form so they agree on tensor names and step indices.
// ---------------------------------------------------------------------------

enum class OpKind { kConv, kDepthwise, kAdd, kAvgPool, kDense, kDropout, kSoftmax };

struct TensorInfo {
  std::string name;
  Shape shape;
  DType dtype = DType::kFloat32;
  int producer = -1;  // op index; -1 for the graph input
  int last_use = -1;  // last op index reading it
};

struct Op {
  OpKind kind = OpKind::kConv;
  std::string name;
  int layer = 0;
  std::vector<int> inputs;
  int output = 0;
  std::string weights;  // empty when the op has no parameters
  std::string bias;
  ConvAttrs attrs;  // conv/depthwise geometry; attrs.activation for dense too
  double rate = 0.0;
};

struct LoweredGraph {
  std::vector<TensorInfo> tensors;
  std::vector<Op> ops;
  int input = 0;
  int output = 0;
  std::vector<int> layer_outputs;  // tensor index of each layer's result

  int find_tensor(const std::string& name) const;  // -1 when absent
};

// Resolves shapes, checks that they chain, that every referenced weight
// exists with the right shape and dtype, and (int8) that quantization
// metadata is complete. Throws ContractError on any violation.
LoweredGraph lower(const ModelGraph& graph);

inline void validate(const ModelGraph& graph) { (void)lower(graph); }

// A parameter tensor the layer table requires, with the shape lowering
// expects. Used to initialize a graph that has layers but no weights yet.
struct ParamSlot {
  std::string name;
  Shape shape;
  bool is_bias = false;
  Activation activation = Activation::kNone;  // of the owning op
};

std::vector<ParamSlot> parameter_slots(const ModelGraph& graph);

// Fills every parameter slot: weights from a truncated normal with He
// scaling (gain 2 ahead of relu6, 1 otherwise), biases at zero. Stream k
// is seeded from (seed, k), so the result depends only on the seed and
// the layer table.
void initialize_parameters(ModelGraph& graph, std::uint64_t seed);

// Total weight + bias element count.
std::int64_t count_params(const ModelGraph& graph);

struct CashewNetOptions {
  double width_multiplier = 0.35;
  int num_classes = 2;
  int head_units = 16;
  double dropout = 0.1;
  std::uint64_t seed = 0;
  int input_size = 96;
  std::vector<std::string> class_labels;  // defaults to class0, class1, ...
};

// Rounds channel counts to multiples of `divisor` without dropping more
// than 10% below the requested value.
int make_divisible(double value, int divisor = 8);

// MobileNetV2-style backbone + 16-unit head, float32, deterministically
// initialized from the seed.
ModelGraph build_cashew_net(const CashewNetOptions& options);

// The (t, c, n, s) rows the backbone is generated from.
struct BottleneckStage {
  int expansion;
  int channels;
  int repeats;
  int stride;
};
const std::vector<BottleneckStage>& mobilenet_v2_stages();

}  // namespace cashew
