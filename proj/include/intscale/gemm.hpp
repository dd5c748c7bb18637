// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "intscale/integer_scale.hpp"
#include "intscale/quantize.hpp"
#include "intscale/types.hpp"

#include <cstdint>
#include <string>

namespace intscale {

enum class PathKind { float_scale, integer_scale, coarse, dual_quant };

std::string to_string(PathKind k);
PathKind path_from_string(const std::string& s);  // accepts "float-scale" etc.

/// Inner stage of the dual-quantization path: an asymmetric 4-bit layer
/// over an 8-bit per-channel weight. values are the inner codes in
/// [0, 15]; scales/zero_points are per (channel, group) with the same unit
/// numbering as group granularity (a column's groups contiguous).
struct DualInnerQuant {
  MatQ values;
  VecD scales;
  VecI zero_points;
  Index group_size = 128;
};

/// Builds the inner stage from an 8-bit per-channel symmetric weight by
/// asymmetric 4-bit group quantization of its integer codes.
DualInnerQuant dual_inner_quantize(const QuantizedTensor& w_outer, Index group_size);

enum class OverflowMode { strict, permissive };
enum class FallbackPolicy { none, float_scale_on_overflow_risk };

struct GemmOptions {
  OverflowMode overflow = OverflowMode::permissive;
  int workers = 1;
  /// Fill the instrumentation fields of GemmResult (per-group |partial|
  /// magnitudes and pre-rounding double outputs).
  bool record_partials = false;
};

struct KernelStats {
  std::int64_t int_to_float_conversions = 0;
  std::int64_t integer_multiply_adds = 0;
  /// Real-domain per-element work; nonzero only on the dual-quant path,
  /// whose inner reconstruction multiplies and subtracts element-wise.
  std::int64_t elementwise_multiplies = 0;
  std::int64_t elementwise_subtractions = 0;
  /// Largest magnitude the path's integer accumulator reached: the scaled
  /// cross-group accumulation for integer-scale, the running group partial
  /// for float-scale, the running sum over K for coarse. Zero for
  /// dual-quant, which accumulates in real arithmetic.
  std::int64_t max_abs_accumulator = 0;
  /// True iff some 32-bit-window integer accumulation left [-2^31, 2^31-1]
  /// (permissive mode; strict mode throws instead).
  bool overflow_detected = false;
  bool fallback_applied = false;
  double wall_ms = 0.0;
};

struct GemmResult {
  MatF output;  // M x N
  KernelStats stats;

  // Instrumentation, filled only when GemmOptions::record_partials is set.
  /// |P_g| per (output element, group), shape M x (N*G), index (i, j*G+g).
  MatI64 abs_group_partials;
  /// Outputs before the final rounding to float.
  MatD output_f64;
};

/// Fine-grained path with float group scales: every group partial product
/// is converted to real and multiplied by its group scale, so conversions
/// = M*N*(K/g).
///
/// All paths require Xq 8-bit symmetric per-token and Wq symmetric; this
/// and the integer path take Wq group-quantized at 4 or 8 bits
/// (per-channel counts as one group of K). Shape mismatch throws
/// DimensionError, scheme or granularity mismatch ParamError.
GemmResult gemm_float_scale(const QuantizedTensor& x, const QuantizedTensor& w,
                            const GemmOptions& opt = {});

/// Integer-scale path: group partials times integer scales accumulate in
/// integer arithmetic; one conversion per output element, then division by
/// the amplifier and the per-token scale. int_scales must be exactly what
/// integerize_scales produces from w's scales at the stated amplifier
/// (ParamError otherwise). Overflow of the 32-bit window throws
/// OverflowError naming the output coordinate in strict mode and sets
/// stats.overflow_detected in permissive mode.
GemmResult gemm_integer_scale(const QuantizedTensor& x, const QuantizedTensor& w,
                              const IntegerScaleSet& int_scales, const GemmOptions& opt = {});

/// Per-channel path: one integer accumulation over full K, one conversion
/// and two scale multiplies per output element. Requires Wq per-channel.
GemmResult gemm_coarse(const QuantizedTensor& x, const QuantizedTensor& w,
                       const GemmOptions& opt = {});

/// Dual-quantization path: weights reconstructed per group as
/// (W_inner - z)*s_inner, multiplied by activations in real arithmetic,
/// then scaled by the outer per-channel and per-token scales. The
/// element-wise multiply and subtraction counts expose the cost this
/// scheme adds over the symmetric paths.
GemmResult gemm_dual_quant(const QuantizedTensor& x, const QuantizedTensor& w_outer,
                           const DualInnerQuant& inner, const GemmOptions& opt = {});

/// A path selection bundled for dispatch. int_scales is required for
/// integer_scale, inner for dual_quant; both may be null otherwise.
struct PathConfig {
  PathKind kind = PathKind::integer_scale;
  const IntegerScaleSet* int_scales = nullptr;
  const DualInnerQuant* inner = nullptr;
};

/// Reference evaluation of the selected path's defining formula with
/// 64-bit integer accumulation and doubles throughout. Deliberately a
/// separate straight-line implementation; used as ground truth in tests.
MatF gemm_oracle(const QuantizedTensor& x, const QuantizedTensor& w, const PathConfig& path);

/// Dispatches to the selected path. With fallback enabled and an
/// integer-scale path whose static overflow bound (see analysis.hpp)
/// exceeds 2^31-1, runs the float-scale path instead and sets
/// stats.fallback_applied; the substitution is reported, never thrown.
GemmResult run_layer(const QuantizedTensor& x, const QuantizedTensor& w, const PathConfig& path,
                     FallbackPolicy fallback, const GemmOptions& opt = {});

}  // namespace intscale
