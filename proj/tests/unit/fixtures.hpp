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
// A small trained float model and its int8 conversion, built once per
// process and shared by the quantizer, trainer and evaluation tests.
#pragma once

#include <vector>

#include "cashew/dataset.hpp"
#include "cashew/executor.hpp"
#include "cashew/graph.hpp"
#include "cashew/head_trainer.hpp"
#include "cashew/quantizer.hpp"

namespace fixture {

struct Trained {
  std::vector<cashew::LabeledImage> train;
  std::vector<cashew::LabeledImage> test;
  cashew::ModelGraph float_model;
  cashew::CalibrationStats stats;
  cashew::ModelGraph int8_model;
  cashew::TrainReport report;
};

inline std::vector<cashew::LabeledImage> synth_set(int per_class, int size, std::uint64_t seed) {
  cashew::SynthSpec spec;
  spec.per_class = per_class;
  spec.image_size = size;
  spec.min_lesion_radius = size / 16.0;
  spec.max_lesion_radius = size / 7.0;
  spec.seed = seed;
  std::vector<cashew::LabeledImage> out;
  for (int i = 0; i < per_class; ++i)
    for (int label = 0; label < 2; ++label) {
      // Label 0 is anthracnose, label 1 healthy, as in the sorted class list.
      const auto img = cashew::synth_leaf(label == 0, spec, static_cast<std::uint64_t>(i));
      out.push_back({cashew::image_to_tensor(img), label, ""});
    }
  return out;
}

inline std::vector<cashew::Tensor> images(const std::vector<cashew::LabeledImage>& s) {
  std::vector<cashew::Tensor> v;
  for (const auto& x : s) v.push_back(x.image);
  return v;
}

inline const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    r.train = synth_set(60, 64, 101);
    r.test = synth_set(50, 64, 202);
    cashew::CashewNetOptions o;
    o.input_size = 64;
    o.seed = 3;
    o.class_labels = cashew::synth_class_labels();
    r.float_model = cashew::build_cashew_net(o);
    std::vector<int> labels;
    for (const auto& s : r.train) labels.push_back(s.label);
    const auto raw = cashew::extract_features(r.float_model, images(r.train));
    const auto scaler = cashew::fit_scaler(raw);
    cashew::TrainConfig cfg;
    cfg.total_steps = 200;
    r.report = cashew::train_head(cashew::apply_scaler(raw, scaler), labels, cfg);
    cashew::install_head(r.float_model, r.report.head, &scaler);
    r.stats = cashew::calibrate(r.float_model, images(r.train));
    r.int8_model = cashew::quantize_model(r.float_model, r.stats);
    return r;
  }();
  return t;
}

inline double accuracy(const cashew::ModelGraph& g, const std::vector<cashew::LabeledImage>& s) {
  cashew::Executor exec(g);
  int hits = 0;
  for (const auto& x : s) hits += static_cast<int>(cashew::argmax(exec.run(x.image))) == x.label;
  return static_cast<double>(hits) / static_cast<double>(s.size());
}

}  // namespace fixture
