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
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cashew {

inline constexpr int kInt8Min = -128;
inline constexpr int kInt8Max = 127;

// Dimensions of a dense array. Activations are NHWC, convolution weights
// are Kh x Kw x Cin x Cout, dense weights are In x Out.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims);
  explicit Shape(std::vector<int> dims);

  const std::vector<int>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  int operator[](std::size_t i) const { return dims_.at(i); }
  std::size_t element_count() const noexcept;

  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<int> dims_;
};

// Per-tensor affine mapping real = scale * (q - zero_point).
struct QuantParams {
  double scale = 1.0;
  int zero_point = 0;

  // Smallest and largest real value an int8 code can express.
  double min_representable() const { return scale * (kInt8Min - zero_point); }
  double max_representable() const { return scale * (kInt8Max - zero_point); }

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

// Throws DomainError unless scale is positive and finite and the zero point
// fits int8 (which also puts 0.0 inside the representable interval).
void validate(const QuantParams& p);

enum class DType { kFloat32, kInt8, kInt32 };

const char* dtype_name(DType t);
std::size_t dtype_size(DType t);

// Dense array with a float32 or integer payload. Integer payloads (int8
// activations/weights, int32 biases) always carry QuantParams; float
// payloads never do.
class Tensor {
 public:
  using Payload = std::variant<std::vector<float>, std::vector<std::int8_t>,
                               std::vector<std::int32_t>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values);
  Tensor(Shape shape, std::vector<std::int8_t> values, QuantParams params);
  Tensor(Shape shape, std::vector<std::int32_t> values, QuantParams params);

  static Tensor zeros(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  DType dtype() const noexcept;
  bool is_float() const noexcept { return dtype() == DType::kFloat32; }
  std::size_t size() const noexcept { return shape_.element_count(); }
  std::size_t byte_size() const noexcept { return size() * dtype_size(dtype()); }

  const std::optional<QuantParams>& qparams() const noexcept { return qparams_; }
  // Throws ContractError when the tensor is not quantized.
  const QuantParams& require_qparams() const;

  std::span<const float> floats() const;
  std::span<float> floats();
  std::span<const std::int8_t> int8s() const;
  std::span<std::int8_t> int8s();
  std::span<const std::int32_t> int32s() const;
  std::span<std::int32_t> int32s();

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  Payload payload_;
  std::optional<QuantParams> qparams_;
};

enum class QuantMode { kAsymmetric, kSymmetric };

// Scale and zero point covering [observed_min, observed_max]. Asymmetric
// widens the range to include zero and spends all 256 codes on it;
// symmetric pins zero_point to 0 and uses +-127.
QuantParams compute_quant_params(double observed_min, double observed_max,
                                 QuantMode mode);

// Rounds half away from zero, then saturates to int8.
std::int8_t quantize_value(double x, const QuantParams& p);
inline double dequantize_value(std::int8_t q, const QuantParams& p) {
  return p.scale * (static_cast<int>(q) - p.zero_point);
}

Tensor quantize(const Tensor& x, const QuantParams& p);
Tensor dequantize(const Tensor& q);

// Real multiplier encoded as mantissa * 2^(exponent - 31) with the mantissa
// normalized into [2^30, 2^31).
struct FixedPointMultiplier {
  std::int32_t mantissa = 1 << 30;
  int exponent = 0;

  double real_value() const;

  friend bool operator==(const FixedPointMultiplier&,
                         const FixedPointMultiplier&) = default;
};

FixedPointMultiplier to_fixed_point(double real_multiplier);

// round(x * real_multiplier) in exact 64-bit integer arithmetic, ties away
// from zero. Building block of requantize and the int8 residual add.
std::int64_t multiply_by_fixed_point(std::int64_t x,
                                     const FixedPointMultiplier& m);

// Accumulator -> int8 output code.
std::int8_t requantize(std::int32_t acc, const FixedPointMultiplier& m,
                       int out_zero_point);

// Integer division of an int32 sum, rounding ties away from zero.
std::int32_t rounded_divide(std::int64_t numerator, std::int64_t denominator);

}  // namespace cashew
