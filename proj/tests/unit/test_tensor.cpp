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
#include <limits>
#include <random>

#include "cashew/errors.hpp"
#include "cashew/random.hpp"
#include "cashew/tensor.hpp"
#include "oracles.hpp"

using namespace cashew;

TEST_CASE("shape rejects empty and non-positive dims") {
  CHECK(Shape{2, 3, 4}.element_count() == 24);
  CHECK_THROWS_AS(Shape(std::vector<int>{}), ContractError);
  CHECK_THROWS_AS((Shape{2, 0}), ContractError);
  CHECK_THROWS_AS((Shape{-1}), ContractError);
}

TEST_CASE("tensor payload must match shape, int8 needs qparams") {
  CHECK_THROWS_AS(Tensor(Shape{3}, std::vector<float>{1, 2}), ContractError);
  const Tensor f(Shape{2}, std::vector<float>{1, 2});
  CHECK_FALSE(f.qparams().has_value());
  CHECK_THROWS_AS(f.require_qparams(), ContractError);
  CHECK_THROWS_AS(dequantize(f), ContractError);
  const Tensor q(Shape{2}, std::vector<std::int8_t>{1, 2}, QuantParams{0.5, 0});
  CHECK(q.qparams()->scale == 0.5);
}

TEST_CASE("compute_quant_params worked values") {
  const auto a = compute_quant_params(0.0, 2.55, QuantMode::kAsymmetric);
  CHECK(a.scale == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(a.zero_point == -128);
  const auto z = compute_quant_params(0.0, 0.0, QuantMode::kAsymmetric);
  CHECK(z.scale == 1.0);
  CHECK(z.zero_point == 0);
  const auto s = compute_quant_params(-6.35, 6.35, QuantMode::kSymmetric);
  CHECK(s.scale == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(s.zero_point == 0);
}

TEST_CASE("compute_quant_params errors") {
  CHECK_THROWS_AS(compute_quant_params(1.0, 0.0, QuantMode::kAsymmetric), DomainError);
  CHECK_THROWS_AS(compute_quant_params(std::nan(""), 1.0, QuantMode::kAsymmetric),
                  DomainError);
  CHECK_THROWS_AS(
      compute_quant_params(0.0, std::numeric_limits<double>::infinity(), QuantMode::kSymmetric),
      DomainError);
}

TEST_CASE("compute_quant_params always includes zero") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    double lo = rng.uniform(-50, 50), hi = rng.uniform(-50, 50);
    if (lo > hi) std::swap(lo, hi);
    for (auto mode : {QuantMode::kAsymmetric, QuantMode::kSymmetric}) {
      const QuantParams p = compute_quant_params(lo, hi, mode);
      CHECK_NOTHROW(validate(p));
      CHECK(p.min_representable() <= 0.0);
      CHECK(p.max_representable() >= 0.0);
    }
  }
}

TEST_CASE("quantize and dequantize worked values") {
  const QuantParams p{0.01, -128};
  const auto q = quantize(Tensor(Shape{3}, std::vector<float>{0.0f, 1.0f, 10.0f}), p);
  CHECK(q.int8s()[0] == -128);
  CHECK(q.int8s()[1] == -28);
  CHECK(q.int8s()[2] == 127);
  CHECK(dequantize_value(-28, p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dequantize_value(-128, p) == 0.0);
}

TEST_CASE("quantize reports the offending index") {
  const Tensor x(Shape{3}, std::vector<float>{0.0f, 1.0f, std::nanf("")});
  try {
    (void)quantize(x, QuantParams{0.1, 0});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("index 2") != std::string::npos);
  }
}

TEST_CASE("rounding is half away from zero") {
  const QuantParams p{1.0, 0};
  CHECK(quantize_value(0.5, p) == 1);
  CHECK(quantize_value(-0.5, p) == -1);
  CHECK(quantize_value(2.5, p) == 3);
  CHECK(quantize_value(-2.5, p) == -3);
}

TEST_CASE("property: round trip, saturation and monotonicity on a grid sweep") {
  for (const QuantParams p : {QuantParams{0.01, -128}, QuantParams{0.05, 0},
                              QuantParams{0.0235, 17}, QuantParams{3.0, -5}}) {
    const double lo = p.min_representable(), hi = p.max_representable();
    int prev = -129;
    const int n = 20000;
    for (int i = 0; i <= n; ++i) {
      const double x = lo + (hi - lo) * i / n;
      const int q = quantize_value(x, p);
      CHECK(q == oracle::quantize(x, p.scale, p.zero_point));
      CHECK(q >= prev);
      prev = q;
      const double err = std::fabs(x - dequantize_value(static_cast<std::int8_t>(q), p));
      CHECK(err <= p.scale / 2 + 1e-12 * std::max(1.0, std::fabs(x)));
    }
    CHECK(quantize_value(hi * 10 + 1, p) == 127);
    CHECK(quantize_value(lo * 10 - 1, p) == -128);
  }
}

TEST_CASE("to_fixed_point worked values") {
  const auto half = to_fixed_point(0.5);
  CHECK(half.mantissa == (1 << 30));
  CHECK(half.exponent == 0);
  const auto one = to_fixed_point(1.0);
  CHECK(one.mantissa == (1 << 30));
  CHECK(one.exponent == 1);
  const auto m = to_fixed_point(0.1234);
  const long double rv = std::ldexp(static_cast<long double>(m.mantissa), m.exponent - 31);
  CHECK(std::fabs(static_cast<double>((rv - 0.1234L) / 0.1234L)) <= std::ldexp(1.0, -30));
  CHECK_THROWS_AS(to_fixed_point(0.0), DomainError);
  CHECK_THROWS_AS(to_fixed_point(-1.0), DomainError);
  CHECK_THROWS_AS(to_fixed_point(std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("property: fixed-point relative error on random multipliers") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> e(-20.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const double real = std::pow(2.0, e(gen));
    const auto m = to_fixed_point(real);
    CHECK(m.mantissa >= (1 << 30));
    CHECK(static_cast<std::int64_t>(m.mantissa) < (std::int64_t{1} << 31));
    const long double rv = std::ldexp(static_cast<long double>(m.mantissa), m.exponent - 31);
    CHECK(std::fabs(static_cast<double>((rv - real) / real)) <= std::ldexp(1.0, -30));
  }
}

TEST_CASE("requantize worked values") {
  const auto half = to_fixed_point(0.5);
  CHECK(requantize(0, half, 7) == 7);
  CHECK(requantize(200, half, 0) == 100);
  CHECK(requantize(1000000, half, 0) == 127);
  CHECK(requantize(-1000000, half, 0) == -128);
  CHECK(requantize(3, half, 0) == 2);    // 1.5 rounds away
  CHECK(requantize(-3, half, 0) == -2);  // -1.5 rounds away
}

TEST_CASE("property: requantize matches exact oracle and stays within one step") {
  Rng rng(3);
  for (int i = 0; i < 20000; ++i) {
    const double real = std::ldexp(rng.uniform(0.5, 1.0), -static_cast<int>(rng.below(16)));
    const auto m = to_fixed_point(real);
    const auto acc = static_cast<std::int32_t>(rng.below(2000001)) - 1000000;
    const int zp = static_cast<int>(rng.below(256)) - 128;
    const int got = requantize(acc, m, zp);
    CHECK(got == oracle::clamp8(oracle::scale_fixed(acc, m.mantissa, m.exponent) + zp));
    const double exact = acc * real + zp;
    if (exact > -128 && exact < 127) CHECK(std::fabs(got - exact) <= 1.0);
  }
}

TEST_CASE("rounded_divide rounds half away from zero") {
  CHECK(rounded_divide(5, 2) == 3);
  CHECK(rounded_divide(-5, 2) == -3);
  CHECK(rounded_divide(4, 3) == 1);
  CHECK(rounded_divide(-4, 3) == -1);
}
