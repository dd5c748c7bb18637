// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace intscale {

/// Dense row-major storage, templated on scalar. Row-major matches the
/// on-disk payload order of the QTNS format.
template <class Scalar>
using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Dense<float>;
using MatD = Dense<double>;
/// Quantized integer values. int16 is wide enough for every supported
/// range: [-128,127], [0,255], [-8,7], [0,15].
using MatQ = Dense<std::int16_t>;
using MatI64 = Dense<std::int64_t>;

using Index = Eigen::Index;

using VecD = Eigen::VectorXd;
using VecI = Eigen::VectorXi;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file header or unsupported on-disk layout.
struct FormatError : Error {
  using Error::Error;
};

/// Payload shorter or longer than the header promises.
struct LengthError : Error {
  using Error::Error;
};

/// Non-finite or out-of-range values where finite values are required.
struct ValueError : Error {
  using Error::Error;
};

/// Incompatible matrix shapes.
struct DimensionError : Error {
  using Error::Error;
};

/// Invalid argument outside the shape domain (bad distribution
/// parameters, unsupported bit width, empty input list, ...).
struct ParamError : Error {
  using Error::Error;
};

/// Integer range exceeded: amplified scale does not fit int32, or a
/// strict-mode accumulator left the 32-bit window.
struct OverflowError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace intscale
