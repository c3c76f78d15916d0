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
#include "cashew/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "cashew/errors.hpp"
#include "cashew/executor.hpp"

namespace cashew {

namespace {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("calibration stats line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

Tensor quantize_bias(const Tensor& bias, double scale) {
  const auto in = bias.floats();
  std::vector<std::int32_t> out(in.size());
  constexpr double kLo = std::numeric_limits<std::int32_t>::min();
  constexpr double kHi = std::numeric_limits<std::int32_t>::max();
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = static_cast<std::int32_t>(std::clamp(std::round(in[i] / scale), kLo, kHi));
  }
  return Tensor(bias.shape(), std::move(out), QuantParams{scale, 0});
}

}  // namespace

void CalibrationStats::observe(const std::string& name, const Tensor& value) {
  if (value.dtype() != DType::kFloat32) {
    throw ContractError("calibration expects float activations, got " +
                        std::string(dtype_name(value.dtype())) + " for " + name);
  }
  const auto v = value.floats();
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  auto [it, inserted] = ranges.try_emplace(name, TensorRange{*lo, *hi});
  if (!inserted) {
    it->second.min = std::min<double>(it->second.min, *lo);
    it->second.max = std::max<double>(it->second.max, *hi);
  }
}

void CalibrationStats::merge(const CalibrationStats& other) {
  for (const auto& [name, r] : other.ranges) {
    auto [it, inserted] = ranges.try_emplace(name, r);
    if (!inserted) {
      it->second.min = std::min(it->second.min, r.min);
      it->second.max = std::max(it->second.max, r.max);
    }
  }
  image_count += other.image_count;
}

CalibrationStats calibrate(const ModelGraph& graph, std::span<const Tensor> images) {
  if (graph.mode != NumericMode::kFloat32) {
    throw ContractError("calibration needs a float32 graph");
  }
  if (images.empty()) throw CalibrationError("calibration dataset is empty");
  Executor executor(graph);
  CalibrationStats stats;
  const ActivationObserver observer = [&stats](const std::string& name, const Tensor& t) {
    stats.observe(name, t);
  };
  for (const Tensor& image : images) {
    executor.run_observed(image, observer);
    ++stats.image_count;
  }
  return stats;
}

std::string format_calibration_stats(const CalibrationStats& stats) {
  std::ostringstream os;
  os << "#images\t" << stats.image_count << '\n';
  for (const auto& [name, r] : stats.ranges) {
    os << name << '\t' << format_real(r.min) << '\t' << format_real(r.max) << '\n';
  }
  return os.str();
}

CalibrationStats parse_calibration_stats(const std::string& text) {
  CalibrationStats stats;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  bool have_count = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields[0] == "#images") {
      if (fields.size() != 2) throw IoError("calibration stats: malformed #images line");
      stats.image_count = static_cast<std::int64_t>(parse_real(fields[1], line_no));
      have_count = true;
      continue;
    }
    if (fields.size() != 3) {
      throw IoError("calibration stats line " + std::to_string(line_no) +
                    ": expected 3 tab-separated fields");
    }
    const TensorRange r{parse_real(fields[1], line_no), parse_real(fields[2], line_no)};
    if (!(r.min <= r.max)) {
      throw IoError("calibration stats line " + std::to_string(line_no) + ": min > max");
    }
    stats.ranges[fields[0]] = r;
  }
  if (!have_count) throw IoError("calibration stats: missing #images header");
  return stats;
}

void save_calibration_stats(const CalibrationStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_calibration_stats(stats);
  if (!out) throw IoError("write failed: " + path.string());
}

CalibrationStats load_calibration_stats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing calibration stats: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_calibration_stats(os.str());
}

ModelGraph quantize_model(const ModelGraph& graph, const CalibrationStats& stats) {
  if (graph.mode != NumericMode::kFloat32) {
    throw ContractError("quantize_model needs a float32 graph");
  }
  const LoweredGraph lg = lower(graph);

  ModelGraph q = graph;
  q.mode = NumericMode::kInt8;
  q.weights.clear();
  q.activation_params.clear();
  q.requant_multipliers.clear();

  const auto from_stats = [&](const std::string& name) {
    const auto it = stats.ranges.find(name);
    if (it == stats.ranges.end()) {
      throw ConversionError("missing calibration stats for tensor '" + name + "'");
    }
    return compute_quant_params(it->second.min, it->second.max, QuantMode::kAsymmetric);
  };

  q.activation_params["input"] = from_stats(lg.tensors[lg.input].name);
  for (const Op& op : lg.ops) {
    const std::string& out = lg.tensors[op.output].name;
    switch (op.kind) {
      case OpKind::kSoftmax:
        break;
      case OpKind::kAvgPool:
      case OpKind::kDropout:
        // Averaging and identity never leave the input range.
        q.activation_params[out] = q.activation_params.at(lg.tensors[op.inputs[0]].name);
        break;
      default:
        q.activation_params[out] = from_stats(out);
        break;
    }
    if (op.weights.empty()) continue;

    const Tensor& w = graph.weights.at(op.weights);
    const auto wv = w.floats();
    double lo = 0.0, hi = 0.0;
    if (!wv.empty()) {
      const auto [a, b] = std::minmax_element(wv.begin(), wv.end());
      lo = *a;
      hi = *b;
    }
    const QuantParams wp = compute_quant_params(lo, hi, QuantMode::kSymmetric);
    const QuantParams& in_p = q.activation_params.at(lg.tensors[op.inputs[0]].name);
    const QuantParams& out_p = q.activation_params.at(out);
    const double acc_scale = in_p.scale * wp.scale;
    q.weights[op.weights] = quantize(w, wp);
    q.weights[op.bias] = quantize_bias(graph.weights.at(op.bias), acc_scale);
    q.requant_multipliers[op.name] = to_fixed_point(acc_scale / out_p.scale);
  }

  q.metadata["quantization"] = "int8 per-tensor; weights symmetric; activations asymmetric min/max";
  q.metadata["calibration_images"] = std::to_string(stats.image_count);
  validate(q);
  return q;
}

AgreementReport compare_models(const ModelGraph& reference, const ModelGraph& candidate,
                               std::span<const LabeledImage> samples) {
  if (reference.input_shape != candidate.input_shape || reference.layers != candidate.layers) {
    throw ContractError("compare_models: architectures differ");
  }
  if (samples.empty()) throw ContractError("compare_models: dataset is empty");

  Executor ref(reference);
  Executor cand(candidate);
  std::size_t classes = 0;
  AgreementReport report;
  std::vector<std::int64_t> class_total, ref_hits, cand_hits;
  std::int64_t agree = 0, ref_correct = 0, cand_correct = 0;
  for (const LabeledImage& s : samples) {
    const std::vector<float> pr = ref.run(s.image);
    const std::vector<float> pc = cand.run(s.image);
    if (classes == 0) {
      classes = pr.size();
      class_total.assign(classes, 0);
      ref_hits.assign(classes, 0);
      cand_hits.assign(classes, 0);
    }
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes) {
      throw ContractError("label " + std::to_string(s.label) + " outside model classes");
    }
    const std::size_t ar = argmax(pr), ac = argmax(pc);
    const auto label = static_cast<std::size_t>(s.label);
    agree += ar == ac;
    ++class_total[label];
    if (ar == label) ++ref_hits[label], ++ref_correct;
    if (ac == label) ++cand_hits[label], ++cand_correct;
    for (std::size_t i = 0; i < classes; ++i) {
      report.max_probability_deviation =
          std::max(report.max_probability_deviation,
                   std::fabs(static_cast<double>(pr[i]) - static_cast<double>(pc[i])));
    }
  }
  const auto n = static_cast<double>(samples.size());
  report.samples = static_cast<std::int64_t>(samples.size());
  report.agreement = static_cast<double>(agree) / n;
  report.reference_accuracy = static_cast<double>(ref_correct) / n;
  report.candidate_accuracy = static_cast<double>(cand_correct) / n;
  report.reference_class_accuracy.resize(classes);
  report.candidate_class_accuracy.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double total = static_cast<double>(class_total[c]);
    report.reference_class_accuracy[c] = total > 0 ? ref_hits[c] / total : 0.0;
    report.candidate_class_accuracy[c] = total > 0 ? cand_hits[c] / total : 0.0;
  }
  return report;
}

}  // namespace cashew
