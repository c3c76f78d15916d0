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
#include "cashew/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cashew/errors.hpp"

namespace cashew {

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.empty()) throw ContractError("shape must have at least one dim");
  for (int d : dims) {
    if (d < 1) throw ContractError("shape dims must be >= 1");
  }
}

template <typename T>
void check_length(const Shape& shape, const std::vector<T>& values) {
  if (values.size() != shape.element_count()) {
    throw ContractError("payload length " + std::to_string(values.size()) +
                        " does not match shape " + shape.to_string());
  }
}

// Rounding right shift of |value| < 2^63 by `shift` bits, ties away from 0.
std::int64_t rounding_shift_right(std::int64_t value, int shift) {
  if (shift <= 0) return value;
  if (shift >= 63) return 0;
  const bool negative = value < 0;
  const std::uint64_t mag = negative ? static_cast<std::uint64_t>(-value)
                                     : static_cast<std::uint64_t>(value);
  const std::uint64_t rounded = (mag + (std::uint64_t{1} << (shift - 1))) >> shift;
  const auto r = static_cast<std::int64_t>(rounded);
  return negative ? -r : r;
}

}  // namespace

Shape::Shape(std::initializer_list<int> dims) : dims_(dims) { check_dims(dims_); }

Shape::Shape(std::vector<int> dims) : dims_(std::move(dims)) { check_dims(dims_); }

std::size_t Shape::element_count() const noexcept {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (int d : dims_) n *= static_cast<std::size_t>(d);
  return n;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

void validate(const QuantParams& p) {
  if (!(p.scale > 0.0) || !std::isfinite(p.scale)) {
    throw DomainError("quantization scale must be positive and finite");
  }
  if (p.zero_point < kInt8Min || p.zero_point > kInt8Max) {
    throw DomainError("zero point " + std::to_string(p.zero_point) +
                      " outside int8 range");
  }
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::kFloat32: return "float32";
    case DType::kInt8: return "int8";
    case DType::kInt32: return "int32";
  }
  return "?";
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kFloat32: return 4;
    case DType::kInt8: return 1;
    case DType::kInt32: return 4;
  }
  return 0;
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), payload_(std::move(values)) {
  check_length(shape_, std::get<0>(payload_));
}

Tensor::Tensor(Shape shape, std::vector<std::int8_t> values, QuantParams params)
    : shape_(std::move(shape)), payload_(std::move(values)), qparams_(params) {
  check_length(shape_, std::get<1>(payload_));
  validate(params);
}

Tensor::Tensor(Shape shape, std::vector<std::int32_t> values, QuantParams params)
    : shape_(std::move(shape)), payload_(std::move(values)), qparams_(params) {
  check_length(shape_, std::get<2>(payload_));
  if (!(params.scale > 0.0) || !std::isfinite(params.scale)) {
    throw DomainError("quantization scale must be positive and finite");
  }
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape.element_count();
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

DType Tensor::dtype() const noexcept {
  switch (payload_.index()) {
    case 1: return DType::kInt8;
    case 2: return DType::kInt32;
    default: return DType::kFloat32;
  }
}

const QuantParams& Tensor::require_qparams() const {
  if (!qparams_) throw ContractError("tensor carries no quantization parameters");
  return *qparams_;
}

std::span<const float> Tensor::floats() const {
  if (dtype() != DType::kFloat32) throw ContractError("tensor is not float32");
  return std::get<0>(payload_);
}
std::span<float> Tensor::floats() {
  if (dtype() != DType::kFloat32) throw ContractError("tensor is not float32");
  return std::get<0>(payload_);
}
std::span<const std::int8_t> Tensor::int8s() const {
  if (dtype() != DType::kInt8) throw ContractError("tensor is not int8");
  return std::get<1>(payload_);
}
std::span<std::int8_t> Tensor::int8s() {
  if (dtype() != DType::kInt8) throw ContractError("tensor is not int8");
  return std::get<1>(payload_);
}
std::span<const std::int32_t> Tensor::int32s() const {
  if (dtype() != DType::kInt32) throw ContractError("tensor is not int32");
  return std::get<2>(payload_);
}
std::span<std::int32_t> Tensor::int32s() {
  if (dtype() != DType::kInt32) throw ContractError("tensor is not int32");
  return std::get<2>(payload_);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.element_count() != size()) {
    throw ContractError("cannot reshape " + shape_.to_string() + " to " +
                        shape.to_string());
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

QuantParams compute_quant_params(double observed_min, double observed_max,
                                 QuantMode mode) {
  if (!std::isfinite(observed_min) || !std::isfinite(observed_max)) {
    throw DomainError("calibration range must be finite");
  }
  if (observed_min > observed_max) {
    throw DomainError("calibration range is inverted (min > max)");
  }
  if (mode == QuantMode::kSymmetric) {
    const double bound = std::max(std::fabs(observed_min), std::fabs(observed_max));
    if (bound == 0.0) return {1.0, 0};
    return {bound / kInt8Max, 0};
  }
  const double lo = std::min(observed_min, 0.0);
  const double hi = std::max(observed_max, 0.0);
  if (lo == 0.0 && hi == 0.0) return {1.0, 0};
  const double scale = (hi - lo) / 255.0;
  const double zp = std::round(kInt8Min - lo / scale);
  return {scale, static_cast<int>(std::clamp(zp, double{kInt8Min}, double{kInt8Max}))};
}

std::int8_t quantize_value(double x, const QuantParams& p) {
  const double q = std::round(x / p.scale) + p.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, double{kInt8Min}, double{kInt8Max}));
}

Tensor quantize(const Tensor& x, const QuantParams& p) {
  validate(p);
  const auto in = x.floats();
  std::vector<std::int8_t> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!std::isfinite(in[i])) {
      throw DomainError("non-finite value at index " + std::to_string(i));
    }
    out[i] = quantize_value(in[i], p);
  }
  return Tensor(x.shape(), std::move(out), p);
}

Tensor dequantize(const Tensor& q) {
  const QuantParams& p = q.require_qparams();
  std::vector<float> out(q.size());
  if (q.dtype() == DType::kInt8) {
    const auto in = q.int8s();
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = static_cast<float>(dequantize_value(in[i], p));
    }
  } else {
    const auto in = q.int32s();
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = static_cast<float>(p.scale * (static_cast<double>(in[i]) - p.zero_point));
    }
  }
  return Tensor(q.shape(), std::move(out));
}

double FixedPointMultiplier::real_value() const {
  return std::ldexp(static_cast<double>(mantissa), exponent - 31);
}

FixedPointMultiplier to_fixed_point(double real_multiplier) {
  if (!(real_multiplier > 0.0) || !std::isfinite(real_multiplier)) {
    throw DomainError("fixed-point multiplier must be positive and finite");
  }
  int exponent = 0;
  const double fraction = std::frexp(real_multiplier, &exponent);  // [0.5, 1)
  auto mantissa = static_cast<std::int64_t>(std::round(std::ldexp(fraction, 31)));
  if (mantissa == (std::int64_t{1} << 31)) {
    mantissa /= 2;
    ++exponent;
  }
  return {static_cast<std::int32_t>(mantissa), exponent};
}

std::int64_t multiply_by_fixed_point(std::int64_t x, const FixedPointMultiplier& m) {
  constexpr std::int64_t kLimit = std::int64_t{1} << 32;
  x = std::clamp(x, -kLimit, kLimit);
  const int shift = 31 - m.exponent;
  if (shift > 0) return rounding_shift_right(x * m.mantissa, shift);
  // Multipliers >= 2^30 only arise from degenerate scales; anything this
  // large saturates int8 anyway, so keep the product bounded.
  constexpr std::int64_t kSmall = std::int64_t{1} << 20;
  const std::int64_t bounded = std::clamp(x, -kSmall, kSmall);
  const int left = std::min(-shift, 10);
  return bounded * m.mantissa * (std::int64_t{1} << left);
}

std::int8_t requantize(std::int32_t acc, const FixedPointMultiplier& m,
                       int out_zero_point) {
  const std::int64_t scaled = multiply_by_fixed_point(acc, m) + out_zero_point;
  return static_cast<std::int8_t>(
      std::clamp<std::int64_t>(scaled, kInt8Min, kInt8Max));
}

std::int32_t rounded_divide(std::int64_t numerator, std::int64_t denominator) {
  const bool negative = (numerator < 0) != (denominator < 0);
  const std::int64_t n = numerator < 0 ? -numerator : numerator;
  const std::int64_t d = denominator < 0 ? -denominator : denominator;
  const std::int64_t q = (2 * n + d) / (2 * d);
  return static_cast<std::int32_t>(negative ? -q : q);
}

}  // namespace cashew
