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
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cashew/errors.hpp"
#include "cashew/executor.hpp"
#include "cashew/model_io.hpp"
#include "cashew/quantizer.hpp"
#include "cashew/random.hpp"
#include "fixtures.hpp"

using namespace cashew;

namespace {

// input(4) -> dense(3, relu6) -> dense(2) -> softmax, with one bias constant per layer.
ModelGraph dense_net(float c1, float c2, std::uint64_t seed = 5) {
  ModelGraph g;
  g.input_shape = Shape{1, 1, 1, 4};
  g.layers = {dense_layer("h", 3, Activation::kRelu6), dense_layer("out", 2), softmax_layer("sm")};
  initialize_parameters(g, seed);
  g.weights.insert_or_assign("h/bias", Tensor(Shape{3}, std::vector<float>(3, c1)));
  g.weights.insert_or_assign("out/bias", Tensor(Shape{2}, std::vector<float>(2, c2)));
  validate(g);
  return g;
}

Tensor rand_input(const Shape& s, Rng& rng) {
  std::vector<float> v(s.element_count());
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return Tensor(s, std::move(v));
}

}  // namespace

TEST_CASE("calibrating one all-zero image pins every tensor at its bias constant") {
  const Tensor zero(Shape{1, 1, 1, 4}, std::vector<float>(4, 0.0f));
  // relu6(-1) = 0, so the second layer sees only its own bias.
  const ModelGraph g = dense_net(-1.0f, -0.25f);
  const CalibrationStats s = calibrate(g, std::span(&zero, 1));
  CHECK(s.image_count == 1);
  CHECK(s.ranges.at("input") == TensorRange{0.0, 0.0});
  CHECK(s.ranges.at("h") == TensorRange{0.0, 0.0});
  CHECK(s.ranges.at("out") == TensorRange{-0.25, -0.25});
  const ModelGraph sat = dense_net(7.5f, 0.0f);
  CHECK(calibrate(sat, std::span(&zero, 1)).ranges.at("h") == TensorRange{6.0, 6.0});
}

TEST_CASE("calibration is deterministic and merges associatively") {
  const ModelGraph g = dense_net(0.1f, 0.2f);
  Rng rng(1);
  std::vector<Tensor> a, b, ab;
  for (int i = 0; i < 7; ++i) a.push_back(rand_input(g.input_shape, rng));
  for (int i = 0; i < 5; ++i) b.push_back(rand_input(g.input_shape, rng));
  ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const CalibrationStats sa = calibrate(g, a);
  CHECK(sa == calibrate(g, a));
  CalibrationStats merged = sa;
  merged.merge(calibrate(g, b));
  CHECK(merged == calibrate(g, ab));
  CalibrationStats other = calibrate(g, b);
  other.merge(sa);
  CHECK(other == merged);
  for (const auto& [name, r] : merged.ranges) CHECK(r.min <= r.max);
}

TEST_CASE("calibration errors") {
  const ModelGraph g = dense_net(0.1f, 0.2f);
  CHECK_THROWS_AS(calibrate(g, std::span<const Tensor>{}), CalibrationError);
  const Tensor wrong(Shape{1, 1, 1, 5}, std::vector<float>(5, 0.0f));
  CHECK_THROWS_AS(calibrate(g, std::span(&wrong, 1)), ContractError);
}

TEST_CASE("calibration stats text round trip") {
  const ModelGraph g = dense_net(0.1f, 0.2f);
  Rng rng(2);
  std::vector<Tensor> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(rand_input(g.input_shape, rng));
  const CalibrationStats s = calibrate(g, xs);
  const std::string text = format_calibration_stats(s);
  CHECK(parse_calibration_stats(text) == s);
  CHECK(text.find("h\t") != std::string::npos);
  const auto path = std::filesystem::temp_directory_path() / "cashew_calib.tsv";
  save_calibration_stats(s, path);
  CHECK(load_calibration_stats(path) == s);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_calibration_stats("/nonexistent/calibration.tsv"), IoError);
}

TEST_CASE("dense weights in [-1, 1] quantize within half a step") {
  ModelGraph g = dense_net(0.1f, 0.2f);
  Rng rng(3);
  std::vector<float> w(12);
  for (auto& v : w) v = static_cast<float>(rng.uniform(-1, 1));
  g.weights.insert_or_assign("h/weights", Tensor(Shape{4, 3}, w));
  std::vector<Tensor> xs;
  for (int i = 0; i < 8; ++i) xs.push_back(rand_input(g.input_shape, rng));
  const ModelGraph q = quantize_model(g, calibrate(g, xs));
  CHECK(q.mode == NumericMode::kInt8);
  const Tensor& qw = q.weights.at("h/weights");
  REQUIRE(qw.dtype() == DType::kInt8);
  CHECK(qw.qparams()->zero_point == 0);
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(std::fabs(w[i] - dequantize_value(qw.int8s()[i], *qw.qparams())) <=
          qw.qparams()->scale / 2 + 1e-9);
  const Tensor& qb = q.weights.at("h/bias");
  CHECK(qb.dtype() == DType::kInt32);
  CHECK(qb.qparams()->scale ==
        doctest::Approx(q.activation_params.at("input").scale * qw.qparams()->scale));
  CHECK(q.layers == g.layers);
}

TEST_CASE("activations seen in calibration quantize without saturation") {
  const auto& t = fixture::trained();
  for (const auto& [name, r] : t.stats.ranges) {
    const auto it = t.int8_model.activation_params.find(name);
    if (it == t.int8_model.activation_params.end()) continue;
    const QuantParams& p = it->second;
    CHECK(p.min_representable() <= 0.0);
    CHECK(p.max_representable() >= 0.0);
    CHECK(quantize_value(r.min, p) > -129);
    CHECK(p.min_representable() <= r.min + p.scale / 2);
    CHECK(p.max_representable() >= r.max - p.scale / 2);
  }
}

TEST_CASE("quantization is deterministic to the byte") {
  const auto& t = fixture::trained();
  CHECK(serialize_model(quantize_model(t.float_model, t.stats)) == serialize_model(t.int8_model));
}

TEST_CASE("missing stats name the tensor") {
  const auto& t = fixture::trained();
  CalibrationStats s = t.stats;
  s.ranges.erase("block_3");
  try {
    (void)quantize_model(t.float_model, s);
    FAIL("expected ConversionError");
  } catch (const ConversionError& e) {
    CHECK(std::string(e.what()).find("'block_3'") != std::string::npos);
  }
}

TEST_CASE("int8 model file is at most 0.40 of the float file") {
  const auto& t = fixture::trained();
  const double ratio = static_cast<double>(model_file_size(t.int8_model)) /
                       static_cast<double>(model_file_size(t.float_model));
  CHECK(ratio > 0.0);
  CHECK(ratio <= 0.40);
}

TEST_CASE("int8 agrees with float on the calibration images") {
  const auto& t = fixture::trained();
  const AgreementReport r = compare_models(t.float_model, t.int8_model, t.train);
  CHECK(r.agreement >= 0.90);
  CHECK(r.samples == static_cast<std::int64_t>(t.train.size()));
  CHECK(r.reference_accuracy >= 0.0);
  CHECK(r.reference_accuracy <= 1.0);
  CHECK(r.reference_class_accuracy.size() == 2);
  const AgreementReport back = compare_models(t.int8_model, t.float_model, t.train);
  CHECK(back.agreement == r.agreement);
}

TEST_CASE("compare_models identity and contracts") {
  const auto& t = fixture::trained();
  const AgreementReport self = compare_models(t.float_model, t.float_model, t.test);
  CHECK(self.agreement == 1.0);
  CHECK(self.max_probability_deviation == 0.0);
  CHECK_THROWS_AS(compare_models(t.float_model, t.int8_model, std::span<const LabeledImage>{}),
                  ContractError);
  CashewNetOptions o;
  o.input_size = 64;
  o.width_multiplier = 0.5;
  CHECK_THROWS_AS(compare_models(t.float_model, build_cashew_net(o), t.test), ContractError);
}

TEST_CASE("int8 graph without qparams is rejected") {
  const auto& t = fixture::trained();
  ModelGraph broken = t.int8_model;
  broken.activation_params.erase("pool");
  CHECK_THROWS_AS(validate(broken), ContractError);
}
