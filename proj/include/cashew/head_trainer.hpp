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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cashew/graph.hpp"

namespace cashew {

struct TrainConfig {
  int total_steps = 300;
  double lr_max = 0.05;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double pct_start = 0.3;
  double weight_decay = 1e-4;
  std::optional<double> clip_norm = 1.0;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;
  // Dropout masks come from their own stream; defaults to `seed`.
  std::optional<std::uint64_t> dropout_seed;
  int batch_size = 32;
  int hidden_units = 16;
};

void validate(const TrainConfig& cfg);

// Step at which the schedule peaks: round(pct_start * total_steps).
int one_cycle_peak_step(const TrainConfig& cfg);

// Cosine warmup from lr_max/div_factor to lr_max, then cosine anneal down
// to lr_max/(div_factor*final_div_factor). Defined on [0, total_steps].
double one_cycle_lr(int step, const TrainConfig& cfg);

struct ClippedGradients {
  std::vector<double> grads;
  double norm = 0.0;  // before clipping
};

ClippedGradients clip_gradients(std::vector<double> grads, double max_norm);

// Row-major rows x cols.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;

  std::span<const float> row(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
};

// Global-average-pool output of `graph` for every image, in input order.
FeatureMatrix extract_features(const ModelGraph& graph, std::span<const Tensor> images);

// Per-column standardization learned from a training matrix. Folded into
// the first dense layer on install, so the deployed graph sees raw features.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

FeatureScaler fit_scaler(const FeatureMatrix& x);
FeatureMatrix apply_scaler(const FeatureMatrix& x, const FeatureScaler& s);

// Dense(hidden, relu6) -> Dropout -> Dense(classes). Weights In x Out.
struct HeadParams {
  int inputs = 0;
  int hidden = 0;
  int classes = 0;
  std::vector<double> w1, b1, w2, b2;

  std::size_t size() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  // Flat order: w1, b1, w2, b2.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

HeadParams init_head(int inputs, int hidden, int classes, std::uint64_t seed);

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy
  HeadParams grad;
};

// `keep_scale` is rows x hidden inverted-dropout multipliers (0 or
// 1/(1-rate)); empty disables dropout.
LossGradient head_loss_gradient(const HeadParams& head, const FeatureMatrix& x,
                                std::span<const int> labels,
                                std::span<const double> keep_scale = {});

std::vector<double> head_probabilities(const HeadParams& head, std::span<const float> features);
double head_accuracy(const HeadParams& head, const FeatureMatrix& x, std::span<const int> labels);

// Plain SGD with decoupled decay: w <- w(1 - lr*wd) - lr*g on weights,
// b <- b - lr*g on biases.
void apply_update(HeadParams& head, const HeadParams& grad, double lr, double weight_decay);

struct TrainReport {
  std::vector<double> loss;
  std::vector<double> lr;
  std::vector<double> grad_norm;
  HeadParams head;
  double train_accuracy = 0.0;
  std::optional<double> validation_accuracy;
};

TrainReport train_head(const FeatureMatrix& features, std::span<const int> labels,
                       const TrainConfig& cfg, const FeatureMatrix* val_features = nullptr,
                       std::span<const int> val_labels = {});

// "step\tlr\tloss" header plus one line per step, 17 significant digits.
std::string format_train_report(const TrainReport& report);
void save_train_report(const TrainReport& report, const std::filesystem::path& path);

// Writes the head into the graph's first and last dense layers, folding
// the scaler into the first one when given.
void install_head(ModelGraph& graph, const HeadParams& head,
                  const FeatureScaler* scaler = nullptr);

}  // namespace cashew
