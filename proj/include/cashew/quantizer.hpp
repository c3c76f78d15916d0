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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cashew/dataset.hpp"
#include "cashew/graph.hpp"

namespace cashew {

struct TensorRange {
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const TensorRange&, const TensorRange&) = default;
};

// Running per-tensor extrema over a calibration set.
struct CalibrationStats {
  std::map<std::string, TensorRange> ranges;
  std::int64_t image_count = 0;

  void observe(const std::string& name, const Tensor& value);
  // Elementwise min/max; associative and commutative.
  void merge(const CalibrationStats& other);

  friend bool operator==(const CalibrationStats&, const CalibrationStats&) = default;
};

// Runs the float graph over every image and records the extrema of every
// activation tensor, graph input included.
CalibrationStats calibrate(const ModelGraph& graph, std::span<const Tensor> images);

// Text form: a "#images\t<count>" line, then "<tensor>\t<min>\t<max>" per
// tensor in name order, reals with 17 significant digits.
std::string format_calibration_stats(const CalibrationStats& stats);
CalibrationStats parse_calibration_stats(const std::string& text);
void save_calibration_stats(const CalibrationStats& stats, const std::filesystem::path& path);
CalibrationStats load_calibration_stats(const std::filesystem::path& path);

// Post-training conversion: weights symmetric per tensor, activations
// asymmetric from the calibrated ranges, biases int32 at in_scale*w_scale,
// requantization multipliers precomputed. Pool and dropout outputs reuse
// their input's parameters. Layer table and shapes are unchanged.
ModelGraph quantize_model(const ModelGraph& graph, const CalibrationStats& stats);

struct AgreementReport {
  double agreement = 0.0;  // fraction of samples with equal top-1
  double reference_accuracy = 0.0;
  double candidate_accuracy = 0.0;
  std::vector<double> reference_class_accuracy;
  std::vector<double> candidate_class_accuracy;
  double max_probability_deviation = 0.0;
  std::int64_t samples = 0;
};

// Runs both models over the labeled set. The models must share input shape
// and layer table.
AgreementReport compare_models(const ModelGraph& reference, const ModelGraph& candidate,
                               std::span<const LabeledImage> samples);

}  // namespace cashew
