// Copyright 2026 The geomotion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace geomotion {

using Index = Eigen::Index;

/// Row-major dense matrix. Token sets are stored as [tokens, channels],
/// image planes as [channels, height*width].
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

template <typename Scalar>
using MatrixRef = Eigen::Ref<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixRef = Eigen::Ref<const Matrix<Scalar>>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Base of all library errors. `kind()` feeds the CLI's machine-readable
/// error report and exit-code mapping.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Bad or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// Unreadable, missing or malformed data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "format"; }
};

class LengthError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "length"; }
};

/// Tensor shapes that violate a module contract.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "shape"; }
};

/// Non-finite values during training or gradient checking (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace geomotion
