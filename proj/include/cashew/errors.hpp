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

#include <stdexcept>
#include <string>

namespace cashew {

// Root of every error thrown by the library. Callers that only need a
// diagnostic string can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric input outside the mathematical domain of an operation
// (non-finite values, inverted ranges, non-positive multipliers).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition: shape mismatch, missing quantization
// parameters, out-of-range hyperparameters.
class ContractError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class ConversionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class LoadErrorKind {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kLengthMismatch,
  kBadManifest,
};

class LoadError : public Error {
 public:
  LoadError(LoadErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  LoadErrorKind kind() const noexcept { return kind_; }

 private:
  LoadErrorKind kind_;
};

}  // namespace cashew
