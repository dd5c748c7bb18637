// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "intscale/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace intscale {

enum class Scheme { symmetric, asymmetric };

enum class GranKind { per_tensor, per_token, per_channel, group };

/// How scale units tile a matrix. Tokens are rows, channels are columns,
/// groups split each column's reduction dimension into contiguous runs of
/// group_size rows.
struct Granularity {
  GranKind kind = GranKind::group;
  Index group_size = 128;

  static Granularity per_tensor() { return {GranKind::per_tensor, 0}; }
  static Granularity per_token() { return {GranKind::per_token, 0}; }
  static Granularity per_channel() { return {GranKind::per_channel, 0}; }
  static Granularity group_of(Index g = 128) { return {GranKind::group, g}; }

  /// Throws ParamError unless the granularity tiles a rows x cols matrix
  /// exactly (group: group_size >= 1 and group_size | rows).
  void validate(Index rows, Index cols) const;

  Index unit_count(Index rows, Index cols) const;

  /// Index of the scale unit governing element (r, c). Group units are
  /// numbered column-major: unit = c * (rows / group_size) + r / group_size,
  /// so a column's groups are contiguous.
  Index unit_of(Index rows, Index r, Index c) const;
};

std::string to_string(Scheme s);
std::string to_string(GranKind k);
Scheme scheme_from_string(const std::string& s);
GranKind gran_kind_from_string(const std::string& s);

struct QuantParams {
  int bit_width = 4;  // 4 or 8
  Scheme scheme = Scheme::symmetric;
  Granularity granularity;
  /// One scale per unit. Kept in double so that requantizing a
  /// reconstruction reproduces values and parameters exactly.
  VecD scales;
  /// One zero point per unit for asymmetric; empty for symmetric.
  VecI zero_points;

  std::int64_t qmin() const;
  std::int64_t qmax() const;
};

struct QuantizedTensor {
  MatQ values;
  QuantParams params;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

/// Round-to-nearest quantization, ties away from zero.
///
/// Symmetric:  s = max|x| / (2^(n-1) - 1),  q = clamp(round(x/s), -2^(n-1), 2^(n-1)-1)
/// Asymmetric: s = (max x - min x) / (2^n - 1), z = round(-min x / s),
///             q = clamp(round(x/s) + z, 0, 2^n - 1)
///
/// computed per scale unit. A unit with zero range gets s = 1 so the
/// half-step error bound holds there too (all-zero units come back
/// exactly). Throws ParamError for bit widths other than 4 or 8,
/// ValueError on non-finite input.
QuantizedTensor quantize(const MatF& x, int bit_width, Scheme scheme, const Granularity& g);

/// Reconstruction: symmetric q*s, asymmetric (q - z)*s, evaluated in
/// double and rounded once to float.
MatF dequantize(const QuantizedTensor& q);

/// Mean of squared element differences, accumulated in double.
double reconstruction_mse(const MatF& a, const MatF& b);

/// Persists values (container format per tensor_io.hpp) plus a JSON
/// sidecar at path + ".json" holding {bit_width, scheme, granularity,
/// group_size, scales, zero_points}. Asymmetric payloads reuse the signed
/// container types byte-for-byte; the sidecar tells readers to interpret
/// them as unsigned.
void write_quantized(const QuantizedTensor& q, const std::filesystem::path& values_path);

QuantizedTensor read_quantized(const std::filesystem::path& values_path);

}  // namespace intscale
