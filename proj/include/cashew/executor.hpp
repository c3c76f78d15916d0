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

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cashew/arena.hpp"
#include "cashew/graph.hpp"
#include "cashew/tensor.hpp"

namespace cashew {

// Called once per activation tensor (graph input included) in execution
// order. int8 tensors arrive with their QuantParams attached.
using ActivationObserver = std::function<void(const std::string& name, const Tensor& value)>;

struct ExecutionResult {
  std::vector<float> probabilities;
  // Output of every layer in layer-table order (empty unless traced).
  std::vector<std::pair<std::string, Tensor>> layer_outputs;
};

// Runs one graph over single images inside a single arena sized by
// plan_arena. Holds its own copy of the packed weights, so the graph may
// go away afterwards. Not thread-safe; use one executor per thread.
class Executor {
 public:
  explicit Executor(const ModelGraph& graph);
  ~Executor();
  Executor(Executor&&) noexcept;
  Executor& operator=(Executor&&) noexcept;

  // `input` is float (normalized to [-1, 1]) and must match the graph's
  // input shape; int8 graphs quantize it with the "input" QuantParams.
  std::vector<float> run(const Tensor& input);
  ExecutionResult run_traced(const Tensor& input);
  std::vector<float> run_observed(const Tensor& input, const ActivationObserver& observer);

  // Output of the global-average-pool layer, dequantized for int8 graphs.
  std::vector<float> features(const Tensor& input);

  const ArenaPlan& plan() const;
  const LoweredGraph& lowered() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<float> execute(const ModelGraph& graph, const Tensor& input);
ExecutionResult execute_traced(const ModelGraph& graph, const Tensor& input);

std::size_t argmax(const std::vector<float>& values);

}  // namespace cashew
