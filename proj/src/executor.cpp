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
#include "cashew/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <span>

#include "cashew/errors.hpp"
#include "cashew/kernels.hpp"

namespace cashew {

namespace {

kernels::FeatureMap map_of(const Shape& s) {
  if (s.rank() == 4) return {s[1], s[2], s[3]};
  return {1, 1, static_cast<int>(s.element_count())};
}

// Everything an op needs at run time, resolved once at construction.
struct PreparedOp {
  OpKind kind = OpKind::kConv;
  std::vector<int> inputs;
  int output = 0;
  kernels::FeatureMap in_map;
  ConvAttrs attrs;
  int kernel = 1;

  kernels::PackedFilter<float> filter_f32;
  kernels::PackedFilter<std::int8_t> filter_s8;
  std::vector<float> weights_f32;  // depthwise KhKwC or dense [Out][In]
  std::vector<std::int8_t> weights_s8;
  std::vector<std::int32_t> row_sums;
  std::vector<float> bias_f32;
  std::vector<std::int32_t> bias_s8;
  kernels::Int8Requant requant;
  kernels::Int8AddParams add_params;
  QuantParams logits_params;  // int8 softmax input
};

template <typename T>
std::vector<T> to_vector(std::span<const T> s) {
  return {s.begin(), s.end()};
}

}  // namespace

struct Executor::Impl {
  LoweredGraph lowered;
  ArenaPlan plan;
  NumericMode mode = NumericMode::kFloat32;
  std::vector<QuantParams> tensor_params;  // int8 tensors only
  std::vector<PreparedOp> ops;
  std::vector<std::max_align_t> arena;
  std::vector<std::size_t> offsets;
  int pool_tensor = -1;

  explicit Impl(const ModelGraph& g) : lowered(lower(g)), mode(g.mode) {
    plan = plan_buffers(activation_lifetimes(lowered), kArenaAlignment);
    arena.resize((plan.total_bytes + sizeof(std::max_align_t) - 1) / sizeof(std::max_align_t) + 1);
    for (const auto& t : lowered.tensors) offsets.push_back(plan.at(t.name).offset);
    tensor_params.resize(lowered.tensors.size());
    if (mode == NumericMode::kInt8) {
      for (std::size_t i = 0; i < lowered.tensors.size(); ++i) {
        if (lowered.tensors[i].dtype == DType::kInt8) {
          tensor_params[i] = g.activation_params.at(lowered.tensors[i].name);
        }
      }
    }
    for (const Op& op : lowered.ops) {
      ops.push_back(prepare(g, op));
      if (op.kind == OpKind::kAvgPool) pool_tensor = op.output;
    }
  }

  PreparedOp prepare(const ModelGraph& g, const Op& op) const {
    PreparedOp p;
    p.kind = op.kind;
    p.inputs = op.inputs;
    p.output = op.output;
    p.in_map = map_of(lowered.tensors[op.inputs[0]].shape);
    p.attrs = op.attrs;
    const bool int8 = mode == NumericMode::kInt8;
    if (!op.weights.empty()) {
      const Tensor& w = g.weights.at(op.weights);
      const Tensor& b = g.weights.at(op.bias);
      p.kernel = w.shape()[0];
      if (int8) {
        p.bias_s8 = to_vector(b.int32s());
        const QuantParams& in_p = tensor_params[op.inputs[0]];
        const QuantParams& out_p = tensor_params[op.output];
        p.requant.input_zero_point = in_p.zero_point;
        p.requant.weight_zero_point = w.require_qparams().zero_point;
        p.requant.multiplier = g.requant_multipliers.at(op.name);
        p.requant.output_zero_point = out_p.zero_point;
        std::tie(p.requant.act_min, p.requant.act_max) =
            int8_activation_range(op.attrs.activation, out_p);
      } else {
        p.bias_f32 = to_vector(b.floats());
      }
      switch (op.kind) {
        case OpKind::kConv:
          if (int8) p.filter_s8 = kernels::pack_filter(w.int8s(), w.shape());
          else p.filter_f32 = kernels::pack_filter(w.floats(), w.shape());
          break;
        case OpKind::kDepthwise:
          if (int8) p.weights_s8 = to_vector(w.int8s());
          else p.weights_f32 = to_vector(w.floats());
          break;
        case OpKind::kDense: {
          const auto n_in = static_cast<std::size_t>(w.shape()[0]);
          const auto n_out = static_cast<std::size_t>(w.shape()[1]);
          if (int8) {
            p.weights_s8.resize(w.size());
            p.row_sums.assign(n_out, 0);
            const auto src = w.int8s();
            for (std::size_t i = 0; i < n_in; ++i)
              for (std::size_t o = 0; o < n_out; ++o) {
                p.weights_s8[o * n_in + i] = src[i * n_out + o];
                p.row_sums[o] += src[i * n_out + o];
              }
          } else {
            p.weights_f32.resize(w.size());
            const auto src = w.floats();
            for (std::size_t i = 0; i < n_in; ++i)
              for (std::size_t o = 0; o < n_out; ++o) p.weights_f32[o * n_in + i] = src[i * n_out + o];
          }
          break;
        }
        default:
          break;
      }
    }
    if (int8 && op.kind == OpKind::kAdd) {
      p.add_params = kernels::make_add_params(tensor_params[op.inputs[0]],
                                              tensor_params[op.inputs[1]],
                                              tensor_params[op.output]);
    }
    if (int8 && op.kind == OpKind::kSoftmax) p.logits_params = tensor_params[op.inputs[0]];
    return p;
  }

  std::byte* base() { return reinterpret_cast<std::byte*>(arena.data()); }

  template <typename T>
  std::span<T> buffer(int t) {
    return {reinterpret_cast<T*>(base() + offsets[t]), lowered.tensors[t].shape.element_count()};
  }

  Tensor snapshot(int t) {
    const TensorInfo& info = lowered.tensors[t];
    if (info.dtype == DType::kInt8) {
      const auto s = buffer<std::int8_t>(t);
      return Tensor(info.shape, std::vector<std::int8_t>(s.begin(), s.end()), tensor_params[t]);
    }
    const auto s = buffer<float>(t);
    return Tensor(info.shape, std::vector<float>(s.begin(), s.end()));
  }

  void load_input(const Tensor& input) {
    if (!input.is_float()) throw ContractError("executor input must be a float tensor");
    const TensorInfo& info = lowered.tensors[lowered.input];
    if (input.shape() != info.shape) {
      throw ContractError("input shape " + input.shape().to_string() +
                          " does not match graph input " + info.shape.to_string());
    }
    const auto src = input.floats();
    if (info.dtype == DType::kInt8) {
      const QuantParams& p = tensor_params[lowered.input];
      auto dst = buffer<std::int8_t>(lowered.input);
      for (std::size_t i = 0; i < src.size(); ++i) {
        if (!std::isfinite(src[i])) {
          throw DomainError("non-finite input value at index " + std::to_string(i));
        }
        dst[i] = quantize_value(src[i], p);
      }
    } else {
      std::copy(src.begin(), src.end(), buffer<float>(lowered.input).begin());
    }
  }

  void run_op(const PreparedOp& p) {
    const bool int8 = mode == NumericMode::kInt8;
    const int in = p.inputs[0];
    switch (p.kind) {
      case OpKind::kConv:
        if (int8) {
          kernels::conv2d(buffer<const std::int8_t>(in), p.in_map, p.filter_s8, p.bias_s8,
                          p.attrs, p.requant, buffer<std::int8_t>(p.output));
        } else {
          kernels::conv2d(buffer<const float>(in), p.in_map, p.filter_f32, p.bias_f32, p.attrs,
                          buffer<float>(p.output));
        }
        break;
      case OpKind::kDepthwise:
        if (int8) {
          kernels::depthwise_conv2d(buffer<const std::int8_t>(in), p.in_map, p.weights_s8,
                                    p.kernel, p.kernel, p.bias_s8, p.attrs, p.requant,
                                    buffer<std::int8_t>(p.output));
        } else {
          kernels::depthwise_conv2d(buffer<const float>(in), p.in_map, p.weights_f32, p.kernel,
                                    p.kernel, p.bias_f32, p.attrs, buffer<float>(p.output));
        }
        break;
      case OpKind::kAdd:
        if (int8) {
          kernels::add(buffer<const std::int8_t>(in), buffer<const std::int8_t>(p.inputs[1]),
                       p.add_params, buffer<std::int8_t>(p.output));
        } else {
          kernels::add(buffer<const float>(in), buffer<const float>(p.inputs[1]),
                       buffer<float>(p.output));
        }
        break;
      case OpKind::kAvgPool:
        if (int8) {
          kernels::global_avg_pool(buffer<const std::int8_t>(in), p.in_map,
                                   buffer<std::int8_t>(p.output));
        } else {
          kernels::global_avg_pool(buffer<const float>(in), p.in_map, buffer<float>(p.output));
        }
        break;
      case OpKind::kDense:
        if (int8) {
          kernels::fully_connected(buffer<const std::int8_t>(in), p.weights_s8, p.row_sums,
                                   p.bias_s8, p.requant, buffer<std::int8_t>(p.output));
        } else {
          kernels::fully_connected(buffer<const float>(in), p.weights_f32, p.bias_f32,
                                   p.attrs.activation, buffer<float>(p.output));
        }
        break;
      case OpKind::kDropout: {
        const std::size_t bytes =
            lowered.tensors[in].shape.element_count() * dtype_size(lowered.tensors[in].dtype);
        std::memmove(base() + offsets[p.output], base() + offsets[in], bytes);
        break;
      }
      case OpKind::kSoftmax:
        if (int8) {
          const auto q = buffer<const std::int8_t>(in);
          std::vector<float> logits(q.size());
          for (std::size_t i = 0; i < q.size(); ++i) {
            logits[i] = static_cast<float>(dequantize_value(q[i], p.logits_params));
          }
          kernels::softmax(logits, buffer<float>(p.output));
        } else {
          kernels::softmax(buffer<const float>(in), buffer<float>(p.output));
        }
        break;
    }
  }

  std::vector<float> run(const Tensor& input, const ActivationObserver* observer) {
    load_input(input);
    if (observer) (*observer)("input", snapshot(lowered.input));
    for (const PreparedOp& p : ops) {
      run_op(p);
      if (observer) (*observer)(lowered.tensors[p.output].name, snapshot(p.output));
    }
    const int out = lowered.output;
    if (lowered.tensors[out].dtype == DType::kFloat32) {
      const auto s = buffer<float>(out);
      return {s.begin(), s.end()};
    }
    const auto t = dequantize(snapshot(out));
    return {t.floats().begin(), t.floats().end()};
  }
};

Executor::Executor(const ModelGraph& graph) : impl_(std::make_unique<Impl>(graph)) {}
Executor::~Executor() = default;
Executor::Executor(Executor&&) noexcept = default;
Executor& Executor::operator=(Executor&&) noexcept = default;

std::vector<float> Executor::run(const Tensor& input) { return impl_->run(input, nullptr); }

std::vector<float> Executor::run_observed(const Tensor& input, const ActivationObserver& observer) {
  return impl_->run(input, &observer);
}

ExecutionResult Executor::run_traced(const Tensor& input) {
  const LoweredGraph& lg = impl_->lowered;
  ExecutionResult result;
  std::vector<bool> is_layer_output(lg.tensors.size(), false);
  for (int t : lg.layer_outputs) is_layer_output[t] = true;
  const ActivationObserver observer = [&](const std::string& name, const Tensor& value) {
    const int t = lg.find_tensor(name);
    if (t >= 0 && is_layer_output[t]) result.layer_outputs.emplace_back(name, value);
  };
  result.probabilities = impl_->run(input, &observer);
  return result;
}

std::vector<float> Executor::features(const Tensor& input) {
  const int pool = impl_->pool_tensor;
  if (pool < 0) throw ContractError("graph has no global average pool layer");
  const std::string& pool_name = impl_->lowered.tensors[pool].name;
  std::vector<float> out;
  const ActivationObserver observer = [&](const std::string& name, const Tensor& value) {
    if (name != pool_name) return;
    const Tensor f = value.is_float() ? value : dequantize(value);
    out.assign(f.floats().begin(), f.floats().end());
  };
  impl_->run(input, &observer);
  return out;
}

const ArenaPlan& Executor::plan() const { return impl_->plan; }
const LoweredGraph& Executor::lowered() const { return impl_->lowered; }

std::vector<float> execute(const ModelGraph& graph, const Tensor& input) {
  return Executor(graph).run(input);
}

ExecutionResult execute_traced(const ModelGraph& graph, const Tensor& input) {
  return Executor(graph).run_traced(input);
}

std::size_t argmax(const std::vector<float>& values) {
  if (values.empty()) throw ContractError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace cashew
