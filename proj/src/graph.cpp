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
#include "cashew/graph.hpp"

#include <algorithm>
#include <utility>

#include "cashew/errors.hpp"

namespace cashew {

namespace {

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::kConv, "conv"},
    {LayerKind::kDepthwiseConv, "depthwise_conv"},
    {LayerKind::kInvertedResidual, "inverted_residual"},
    {LayerKind::kGlobalAvgPool, "global_avg_pool"},
    {LayerKind::kDense, "dense"},
    {LayerKind::kDropout, "dropout"},
    {LayerKind::kSoftmax, "softmax"},
};

class Lowering {
 public:
  explicit Lowering(const ModelGraph& g, std::vector<ParamSlot>* slots = nullptr)
      : g_(g), slots_(slots) {}

  LoweredGraph run() {
    if (g_.input_shape.rank() != 4 || g_.input_shape[0] != 1) {
      throw ContractError("graph input must be 1 x H x W x C, got " +
                          g_.input_shape.to_string());
    }
    if (g_.layers.empty()) throw ContractError("graph has no layers");
    lg_.input = add_tensor("input", g_.input_shape, activation_dtype(), -1);
    int cur = lg_.input;
    for (std::size_t i = 0; i < g_.layers.size(); ++i) {
      layer_ = static_cast<int>(i);
      cur = lower_layer(g_.layers[i], cur);
      lg_.layer_outputs.push_back(cur);
    }
    lg_.output = cur;
    for (std::size_t i = 0; i < lg_.ops.size(); ++i) {
      for (int t : lg_.ops[i].inputs) lg_.tensors[t].last_use = static_cast<int>(i);
    }
    // The result stays live through the final step.
    lg_.tensors[lg_.output].last_use = static_cast<int>(lg_.ops.size()) - 1;
    if (g_.mode == NumericMode::kInt8 && !slots_) check_quantization();
    return std::move(lg_);
  }

 private:
  DType activation_dtype() const {
    return g_.mode == NumericMode::kInt8 ? DType::kInt8 : DType::kFloat32;
  }

  int add_tensor(const std::string& name, Shape shape, DType dtype, int producer) {
    if (lg_.find_tensor(name) >= 0) {
      throw ContractError("duplicate tensor name '" + name + "'");
    }
    lg_.tensors.push_back({name, std::move(shape), dtype, producer, -1});
    return static_cast<int>(lg_.tensors.size()) - 1;
  }

  const Shape& shape_of(int t) const { return lg_.tensors[t].shape; }

  void check_weight(const std::string& name, const Shape& expected, bool is_bias,
                    Activation act) {
    if (slots_) {
      slots_->push_back({name, expected, is_bias, act});
      return;
    }
    const auto it = g_.weights.find(name);
    if (it == g_.weights.end()) throw ContractError("missing weight tensor '" + name + "'");
    const Tensor& w = it->second;
    if (w.shape() != expected) {
      throw ContractError("weight '" + name + "' has shape " + w.shape().to_string() +
                          ", expected " + expected.to_string());
    }
    if (g_.mode == NumericMode::kFloat32) {
      if (!w.is_float()) throw ContractError("weight '" + name + "' must be float32");
      return;
    }
    const DType want = is_bias ? DType::kInt32 : DType::kInt8;
    if (w.dtype() != want || !w.qparams()) {
      throw ContractError("weight '" + name + "' must be quantized " +
                          dtype_name(want));
    }
  }

  int emit(Op op, const std::string& out_name, Shape out_shape, DType dtype) {
    op.layer = layer_;
    const int index = static_cast<int>(lg_.ops.size());
    op.output = add_tensor(out_name, std::move(out_shape), dtype, index);
    lg_.ops.push_back(std::move(op));
    return lg_.ops.back().output;
  }

  int emit_conv(const std::string& op_name, const std::string& out_name, int in,
                int filters, int kernel, const ConvAttrs& attrs, bool depthwise) {
    validate(attrs);
    const Shape& s = shape_of(in);
    if (s.rank() != 4) throw ContractError("'" + op_name + "' needs an NHWC input");
    const int cin = s[3];
    if (kernel < 1 || (!depthwise && filters < 1)) {
      throw ContractError("'" + op_name + "' has invalid kernel/filters");
    }
    const int cout = depthwise ? cin : filters;
    const kernels::FeatureMap out =
        kernels::conv_output({s[1], s[2], cin}, kernel, kernel, cout, attrs);
    Op op;
    op.kind = depthwise ? OpKind::kDepthwise : OpKind::kConv;
    op.name = op_name;
    op.inputs = {in};
    op.weights = op_name + "/weights";
    op.bias = op_name + "/bias";
    op.attrs = attrs;
    check_weight(op.weights, Shape{kernel, kernel, depthwise ? 1 : cin, cout}, false,
                 attrs.activation);
    check_weight(op.bias, Shape{cout}, true, attrs.activation);
    return emit(std::move(op), out_name, Shape{1, out.height, out.width, cout},
                activation_dtype());
  }

  int lower_layer(const LayerSpec& l, int in) {
    if (l.name.empty()) throw ContractError("layer " + std::to_string(layer_) + " has no name");
    switch (l.kind) {
      case LayerKind::kConv:
        return emit_conv(l.name, l.name, in, l.filters, l.kernel,
                         {l.stride, l.padding, l.activation}, false);
      case LayerKind::kDepthwiseConv:
        return emit_conv(l.name, l.name, in, 0, l.kernel,
                         {l.stride, l.padding, l.activation}, true);
      case LayerKind::kInvertedResidual:
        return lower_inverted_residual(l, in);
      case LayerKind::kGlobalAvgPool: {
        const Shape& s = shape_of(in);
        if (s.rank() != 4) throw ContractError("'" + l.name + "' needs an NHWC input");
        Op op;
        op.kind = OpKind::kAvgPool;
        op.name = l.name;
        op.inputs = {in};
        return emit(std::move(op), l.name, Shape{1, 1, 1, s[3]}, activation_dtype());
      }
      case LayerKind::kDense: {
        if (l.filters < 1) throw ContractError("'" + l.name + "' needs units >= 1");
        const int n_in = static_cast<int>(shape_of(in).element_count());
        Op op;
        op.kind = OpKind::kDense;
        op.name = l.name;
        op.inputs = {in};
        op.weights = l.name + "/weights";
        op.bias = l.name + "/bias";
        op.attrs.activation = l.activation;
        check_weight(op.weights, Shape{n_in, l.filters}, false, l.activation);
        check_weight(op.bias, Shape{l.filters}, true, l.activation);
        return emit(std::move(op), l.name, Shape{1, l.filters}, activation_dtype());
      }
      case LayerKind::kDropout: {
        if (!(l.rate >= 0.0 && l.rate < 1.0)) {
          throw ContractError("'" + l.name + "' dropout rate must be in [0, 1)");
        }
        const auto i = static_cast<std::size_t>(layer_);
        const bool between_dense = i > 0 && i + 1 < g_.layers.size() &&
                                   g_.layers[i - 1].kind == LayerKind::kDense &&
                                   g_.layers[i + 1].kind == LayerKind::kDense;
        if (!between_dense) {
          throw ContractError("dropout '" + l.name + "' must sit between two dense layers");
        }
        Op op;
        op.kind = OpKind::kDropout;
        op.name = l.name;
        op.inputs = {in};
        op.rate = l.rate;
        return emit(std::move(op), l.name, shape_of(in), activation_dtype());
      }
      case LayerKind::kSoftmax: {
        if (static_cast<std::size_t>(layer_) + 1 != g_.layers.size()) {
          throw ContractError("softmax must be the last layer");
        }
        Op op;
        op.kind = OpKind::kSoftmax;
        op.name = l.name;
        op.inputs = {in};
        return emit(std::move(op), l.name, shape_of(in), DType::kFloat32);
      }
    }
    throw ContractError("unknown layer kind");
  }

  int lower_inverted_residual(const LayerSpec& l, int in) {
    const int cin = shape_of(in)[3];
    if (l.expansion < 1) throw ContractError("'" + l.name + "' expansion must be >= 1");
    if (l.residual && (l.stride != 1 || cin != l.filters)) {
      throw ContractError("'" + l.name +
                          "' residual needs stride 1 and matching channel counts");
    }
    int cur = in;
    if (l.expansion != 1) {
      const std::string n = l.name + "/expand";
      cur = emit_conv(n, n, cur, cin * l.expansion, 1,
                      {1, Padding::kSame, Activation::kRelu6}, false);
    }
    const std::string dw = l.name + "/depthwise";
    cur = emit_conv(dw, dw, cur, 0, 3, {l.stride, Padding::kSame, Activation::kRelu6}, true);
    const std::string proj = l.name + "/project";
    cur = emit_conv(proj, l.residual ? proj : l.name, cur, l.filters, 1,
                    {1, Padding::kSame, Activation::kNone}, false);
    if (!l.residual) return cur;
    Op op;
    op.kind = OpKind::kAdd;
    op.name = l.name + "/add";
    op.inputs = {in, cur};
    return emit(std::move(op), l.name, shape_of(cur), activation_dtype());
  }

  void check_quantization() const {
    for (const auto& t : lg_.tensors) {
      if (t.dtype == DType::kFloat32) continue;
      const auto it = g_.activation_params.find(t.name);
      if (it == g_.activation_params.end()) {
        throw ContractError("int8 graph is missing QuantParams for activation '" +
                            t.name + "'");
      }
      validate(it->second);
    }
    for (const auto& op : lg_.ops) {
      if (op.weights.empty()) continue;
      if (!g_.requant_multipliers.contains(op.name)) {
        throw ContractError("int8 graph is missing the requantization multiplier of '" +
                            op.name + "'");
      }
    }
  }

  const ModelGraph& g_;
  std::vector<ParamSlot>* slots_;
  LoweredGraph lg_;
  int layer_ = 0;
};

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (const auto& k : kKindNames) {
    if (name == k.name) return k.kind;
  }
  throw ContractError("unknown layer kind '" + name + "'");
}

const char* numeric_mode_name(NumericMode mode) {
  return mode == NumericMode::kInt8 ? "int8" : "float32";
}

LayerSpec conv_layer(std::string name, int filters, int kernel, int stride, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.name = std::move(name);
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  l.activation = act;
  return l;
}

LayerSpec depthwise_layer(std::string name, int kernel, int stride, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::kDepthwiseConv;
  l.name = std::move(name);
  l.kernel = kernel;
  l.stride = stride;
  l.activation = act;
  return l;
}

LayerSpec inverted_residual_layer(std::string name, int expansion, int stride,
                                  int filters, bool residual) {
  LayerSpec l;
  l.kind = LayerKind::kInvertedResidual;
  l.name = std::move(name);
  l.expansion = expansion;
  l.stride = stride;
  l.filters = filters;
  l.residual = residual;
  return l;
}

LayerSpec pool_layer(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::kGlobalAvgPool;
  l.name = std::move(name);
  return l;
}

LayerSpec dense_layer(std::string name, int units, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.name = std::move(name);
  l.filters = units;
  l.activation = act;
  return l;
}

LayerSpec dropout_layer(std::string name, double rate) {
  LayerSpec l;
  l.kind = LayerKind::kDropout;
  l.name = std::move(name);
  l.rate = rate;
  return l;
}

LayerSpec softmax_layer(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::kSoftmax;
  l.name = std::move(name);
  return l;
}

int LoweredGraph::find_tensor(const std::string& name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

LoweredGraph lower(const ModelGraph& graph) { return Lowering(graph).run(); }

std::vector<ParamSlot> parameter_slots(const ModelGraph& graph) {
  std::vector<ParamSlot> slots;
  Lowering(graph, &slots).run();
  return slots;
}

std::int64_t count_params(const ModelGraph& graph) {
  std::int64_t total = 0;
  for (const auto& [name, t] : graph.weights) total += static_cast<std::int64_t>(t.size());
  return total;
}

}  // namespace cashew
