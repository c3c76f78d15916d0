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
#include <cmath>
#include <sstream>

#include "cashew/errors.hpp"
#include "cashew/graph.hpp"
#include "cashew/random.hpp"

namespace cashew {

const std::vector<BottleneckStage>& mobilenet_v2_stages() {
  static const std::vector<BottleneckStage> stages = {
      {1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
      {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1},
  };
  return stages;
}

int make_divisible(double value, int divisor) {
  int rounded = std::max(divisor, static_cast<int>(value + divisor / 2.0) / divisor * divisor);
  if (rounded < 0.9 * value) rounded += divisor;
  return rounded;
}

void initialize_parameters(ModelGraph& graph, std::uint64_t seed) {
  const auto slots = parameter_slots(graph);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const ParamSlot& slot = slots[k];
    std::vector<float> values(slot.shape.element_count(), 0.0f);
    if (!slot.is_bias) {
      const auto& d = slot.shape.dims();
      double fan_in = 1.0;
      for (std::size_t i = 0; i + 1 < d.size(); ++i) fan_in *= d[i];
      const double gain = slot.activation == Activation::kRelu6 ? 2.0 : 1.0;
      // Truncation at 2 sigma removes ~12% of the variance; undo that.
      const double stddev = std::sqrt(gain / fan_in) / 0.87962566103423978;
      Rng rng(Rng::mix(seed, k));
      for (float& v : values) v = static_cast<float>(rng.truncated_normal(stddev));
    }
    graph.weights.insert_or_assign(slot.name, Tensor(slot.shape, std::move(values)));
  }
}

ModelGraph build_cashew_net(const CashewNetOptions& options) {
  const double alpha = options.width_multiplier;
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ContractError("width multiplier must be in (0, 1]");
  }
  if (options.num_classes < 2) throw ContractError("need at least two classes");
  if (options.head_units < 1) throw ContractError("head needs at least one unit");
  if (!(options.dropout >= 0.0 && options.dropout < 1.0)) {
    throw ContractError("dropout rate must be in [0, 1)");
  }
  if (options.input_size < 8) throw ContractError("input size must be >= 8");
  if (!options.class_labels.empty() &&
      options.class_labels.size() != static_cast<std::size_t>(options.num_classes)) {
    throw ContractError("class label count must equal num_classes");
  }

  ModelGraph g;
  g.input_shape = Shape{1, options.input_size, options.input_size, 3};
  g.layers.push_back(conv_layer("stem", make_divisible(32 * alpha), 3, 2));
  int channels = make_divisible(32 * alpha);
  int block = 0;
  for (const auto& stage : mobilenet_v2_stages()) {
    const int out = make_divisible(stage.channels * alpha);
    for (int r = 0; r < stage.repeats; ++r) {
      const int stride = r == 0 ? stage.stride : 1;
      const bool residual = stride == 1 && channels == out;
      g.layers.push_back(inverted_residual_layer("block_" + std::to_string(block++),
                                                 stage.expansion, stride, out, residual));
      channels = out;
    }
  }
  // The last pointwise conv keeps its full width below alpha 1.
  g.layers.push_back(conv_layer("head_conv", 1280, 1, 1));
  g.layers.push_back(pool_layer("pool"));
  g.layers.push_back(dense_layer("fc", options.head_units, Activation::kRelu6));
  g.layers.push_back(dropout_layer("dropout", options.dropout));
  g.layers.push_back(dense_layer("logits", options.num_classes));
  g.layers.push_back(softmax_layer("softmax"));

  if (options.class_labels.empty()) {
    for (int c = 0; c < options.num_classes; ++c) {
      g.class_labels.push_back("class" + std::to_string(c));
    }
  } else {
    g.class_labels = options.class_labels;
  }

  std::ostringstream width;
  width.precision(17);
  width << alpha;
  g.metadata["architecture"] = "mobilenet_v2_cashew";
  g.metadata["width_multiplier"] = width.str();
  g.metadata["input_normalization"] = "x/127.5-1";
  g.metadata["seed"] = std::to_string(options.seed);
  g.metadata["reported_full_scale_params"] = "6589734";

  initialize_parameters(g, options.seed);
  validate(g);
  return g;
}

}  // namespace cashew
