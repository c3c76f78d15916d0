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
#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cashew/arena.hpp"
#include "cashew/errors.hpp"
#include "cashew/executor.hpp"
#include "cashew/graph.hpp"
#include "cashew/head_trainer.hpp"
#include "cashew/model_io.hpp"
#include "cashew/pipeline.hpp"
#include "cashew/quantizer.hpp"
#include "cashew/spray_planner.hpp"
#include "cashew/tensor.hpp"

namespace py = pybind11;
using namespace cashew;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Accepts HxWx3 or 1xHxWx3.
Tensor to_image(const FloatArray& a) {
  std::vector<int> dims(a.shape(), a.shape() + a.ndim());
  if (dims.size() == 3) dims.insert(dims.begin(), 1);
  if (dims.size() != 4 || dims[0] != 1)
    throw std::invalid_argument("image must have shape (H, W, C) or (1, H, W, C)");
  return Tensor(Shape(dims), std::vector<float>(a.data(), a.data() + a.size()));
}

std::vector<Tensor> to_images(const std::vector<FloatArray>& xs) {
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(to_image(x));
  return out;
}

FeatureMatrix to_features(const FloatArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("features must be 2-D");
  return {static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
          std::vector<float>(a.data(), a.data() + a.size())};
}

py::array_t<float> from_features(const FeatureMatrix& m) {
  py::array_t<float> out({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "int8 edge inference and variable-rate spray planning";

  py::register_exception<Error>(m, "CashewError", PyExc_RuntimeError);

  py::class_<QuantParams>(m, "QuantParams")
      .def(py::init([](double scale, int zero_point) {
             QuantParams p{scale, zero_point};
             validate(p);
             return p;
           }),
           py::arg("scale"), py::arg("zero_point"))
      .def_readonly("scale", &QuantParams::scale)
      .def_readonly("zero_point", &QuantParams::zero_point)
      .def("__repr__", [](const QuantParams& p) {
        return "QuantParams(scale=" + std::to_string(p.scale) +
               ", zero_point=" + std::to_string(p.zero_point) + ")";
      });
  m.def("compute_quant_params", [](double lo, double hi, bool symmetric) {
    return compute_quant_params(lo, hi, symmetric ? QuantMode::kSymmetric : QuantMode::kAsymmetric);
  }, py::arg("observed_min"), py::arg("observed_max"), py::arg("symmetric") = false);
  m.def("quantize_value", [](double x, const QuantParams& p) { return int(quantize_value(x, p)); });
  m.def("dequantize_value", [](int q, const QuantParams& p) {
    if (q < -128 || q > 127) throw std::invalid_argument("code outside int8");
    return dequantize_value(static_cast<std::int8_t>(q), p);
  });
  m.def("to_fixed_point", [](double real) {
    const auto f = to_fixed_point(real);
    return py::make_tuple(f.mantissa, f.exponent);
  });

  py::class_<ModelGraph>(m, "Model")
      .def_property_readonly("mode", [](const ModelGraph& g) { return numeric_mode_name(g.mode); })
      .def_property_readonly("input_shape", [](const ModelGraph& g) { return g.input_shape.dims(); })
      .def_readonly("class_labels", &ModelGraph::class_labels)
      .def_readonly("metadata", &ModelGraph::metadata)
      .def_property_readonly("layer_names",
                             [](const ModelGraph& g) {
                               std::vector<std::string> names;
                               for (const auto& l : g.layers) names.push_back(l.name);
                               return names;
                             })
      .def("param_count", &count_params)
      .def("file_size", &model_file_size)
      .def("arena_bytes", [](const ModelGraph& g) { return plan_arena(g).total_bytes; })
      .def("serialize", [](const ModelGraph& g) {
        const auto b = serialize_model(g);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def("__eq__", [](const ModelGraph& a, const ModelGraph& b) { return a == b; });

  m.def(
      "build_model",
      [](double width, int num_classes, int head_units, double dropout, std::uint64_t seed,
         int input_size, std::vector<std::string> labels) {
        return build_cashew_net({width, num_classes, head_units, dropout, seed, input_size,
                                 std::move(labels)});
      },
      py::arg("width_multiplier") = 0.35, py::arg("num_classes") = 2, py::arg("head_units") = 16,
      py::arg("dropout") = 0.1, py::arg("seed") = 0, py::arg("input_size") = 96,
      py::arg("class_labels") = std::vector<std::string>{});
  m.def("load_model", &load_model, py::arg("path"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("deserialize_model", [](const py::bytes& b) {
    const std::string s = b;
    return deserialize_model(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });

  m.def("execute", [](const ModelGraph& g, const FloatArray& image) {
    return execute(g, to_image(image));
  }, py::arg("model"), py::arg("image"));
  m.def("predict", [](const ModelGraph& g, const std::vector<FloatArray>& images) {
    Executor ex(g);
    std::vector<int> out;
    for (const auto& t : to_images(images)) out.push_back(static_cast<int>(argmax(ex.run(t))));
    return out;
  }, py::arg("model"), py::arg("images"));

  py::class_<CalibrationStats>(m, "CalibrationStats")
      .def("to_text", &format_calibration_stats)
      .def_static("from_text", &parse_calibration_stats)
      .def_property_readonly("ranges", [](const CalibrationStats& s) {
        std::map<std::string, std::pair<double, double>> out;
        for (const auto& [k, r] : s.ranges) out[k] = {r.min, r.max};
        return out;
      });
  m.def("calibrate", [](const ModelGraph& g, const std::vector<FloatArray>& images) {
    const auto ts = to_images(images);
    return calibrate(g, ts);
  }, py::arg("model"), py::arg("images"));
  m.def("quantize_model", &quantize_model, py::arg("model"), py::arg("stats"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("total_steps", &TrainConfig::total_steps)
      .def_readwrite("lr_max", &TrainConfig::lr_max)
      .def_readwrite("div_factor", &TrainConfig::div_factor)
      .def_readwrite("final_div_factor", &TrainConfig::final_div_factor)
      .def_readwrite("pct_start", &TrainConfig::pct_start)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_readwrite("dropout_rate", &TrainConfig::dropout_rate)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("hidden_units", &TrainConfig::hidden_units);
  m.def("one_cycle_lr", &one_cycle_lr, py::arg("step"), py::arg("config"));
  m.def("clip_gradients", [](std::vector<double> g, double max_norm) {
    const auto c = clip_gradients(std::move(g), max_norm);
    return py::make_tuple(c.grads, c.norm);
  }, py::arg("grads"), py::arg("max_norm"));

  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("loss", &TrainReport::loss)
      .def_readonly("lr", &TrainReport::lr)
      .def_readonly("train_accuracy", &TrainReport::train_accuracy);
  m.def("extract_features", [](const ModelGraph& g, const std::vector<FloatArray>& images) {
    const auto ts = to_images(images);
    return from_features(extract_features(g, ts));
  }, py::arg("model"), py::arg("images"));
  // Fits the scaler, trains the head and installs both into a copy of `model`.
  m.def("train_head", [](const ModelGraph& g, const FloatArray& features,
                         const std::vector<int>& labels, const TrainConfig& cfg) {
    const FeatureMatrix raw = to_features(features);
    const FeatureScaler scaler = fit_scaler(raw);
    TrainReport report = train_head(apply_scaler(raw, scaler), labels, cfg);
    ModelGraph out = g;
    install_head(out, report.head, &scaler);
    return py::make_tuple(out, report);
  }, py::arg("model"), py::arg("features"), py::arg("labels"), py::arg("config") = TrainConfig{});

  py::class_<SprayPolicy>(m, "SprayPolicy")
      .def(py::init([](double threshold, double base_rate, double max_rate) {
             SprayPolicy p{threshold, base_rate, max_rate};
             validate(p);
             return p;
           }),
           py::arg("threshold") = 0.2, py::arg("base_rate") = 2.0, py::arg("max_rate") = 6.0)
      .def_readonly("threshold", &SprayPolicy::threshold)
      .def_readonly("base_rate", &SprayPolicy::base_rate)
      .def_readonly("max_rate", &SprayPolicy::max_rate);
  m.def("dosage_for", &dosage_for, py::arg("severity"), py::arg("policy"));
  // detections: iterable of (lat, lon, label) with label "healthy" or "anthracnose".
  m.def("plan_spray", [](const std::vector<std::tuple<double, double, std::string>>& detections,
                         std::pair<double, double> south_west, std::pair<double, double> north_east,
                         double cell_size_m, const SprayPolicy& policy, double uniform_rate) {
    std::vector<DetectionRecord> recs;
    for (const auto& [lat, lon, label] : detections)
      recs.push_back({lat, lon, parse_detection_label(label), 1.0});
    const FieldGrid grid = grid_from_bounds({south_west.first, south_west.second},
                                            {north_east.first, north_east.second}, cell_size_m);
    const SeverityMap map = aggregate(recs, grid);
    const SprayPlan plan = plan_spray(map, policy);
    const SavingsReport s = compare_uniform(plan, uniform_rate);
    py::dict d;
    d["rows"] = grid.rows;
    d["cols"] = grid.cols;
    d["severity"] = plan.severity;
    d["dosage"] = plan.dosage;
    d["out_of_bounds"] = map.out_of_bounds;
    d["uniform_liters"] = s.uniform_liters;
    d["variable_liters"] = s.variable_liters;
    d["reduction"] = s.reduction;
    return d;
  }, py::arg("detections"), py::arg("south_west"), py::arg("north_east"),
     py::arg("cell_size_m") = 10.0, py::arg("policy") = SprayPolicy{}, py::arg("uniform_rate") = 6.0);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
