// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "intscale/quantize.hpp"
#include "intscale/types.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace intscale {

/// Group scales lifted to integers: int_scales[u] = max(1, round(scales[u] *
/// amplifier)) with a power-of-two amplifier. Dividing the accumulated
/// integer output by the amplifier (an exact binary shift) restores the
/// original magnitude.
struct IntegerScaleSet {
  VecI int_scales;
  std::int64_t amplifier = 1;
  int exponent = 0;  // amplifier == 1 << exponent
};

/// Default amplifier when the caller does not search: 2^10. Large enough
/// that typical group scales (2^-10 .. 2^-6) land on >= 1 without help,
/// small enough to keep accumulators far from the 32-bit edge.
constexpr std::int64_t kDefaultAmplifier = 1024;

constexpr std::int64_t default_amplifier() { return kDefaultAmplifier; }

/// Smallest power-of-two amplifier that lifts every scale to at least 1:
/// doubling from 1 until min(scales) * a >= 1. Scales already >= 1 need no
/// amplification and yield 1. Throws ParamError if scales is empty or any
/// scale is not a positive finite number.
std::int64_t search_amplifier(const VecD& scales);
int search_amplifier_exponent(const VecD& scales);

/// Rounds each amplified scale to the nearest integer (ties away from
/// zero), clamping to a floor of 1 so no group is silently dropped.
/// Throws ParamError unless amplifier is a positive power of two,
/// OverflowError if any rounded value exceeds int32.
IntegerScaleSet integerize_scales(const VecD& scales, std::int64_t amplifier);

/// Relative distortion of the integer approximation alone:
/// mean over units of ((int_scale/amplifier - scale) / scale)^2.
double scale_relative_mse(const VecD& scales, const IntegerScaleSet& s);

struct ScaleAnalysis {
  /// One count per analyzed matrix: the heuristic amplifier exponent its
  /// scale set needs (how many bit shifts lift the smallest scale to 1).
  /// Counts sum to the number of matrices.
  std::map<int, std::int64_t> bit_shift_histogram;
  /// Pooled range of int_scales with every matrix amplified by its own
  /// heuristic amplifier.
  std::int32_t amplified_min = 0;
  std::int32_t amplified_max = 0;
  /// Pooled weight reconstruction MSE (integer-scale dequantization vs the
  /// float-scale reconstruction of the same codes) per candidate
  /// amplifier, keyed by amplifier value.
  std::map<std::int64_t, double> mse_by_amplifier;
};

/// Group-quantizes each weight matrix at the given bit width and group
/// size, then reports how the matrices' heuristic exponents distribute and
/// how much reconstruction error each candidate amplifier adds on top of
/// float scales. Throws ParamError on an empty weight list.
ScaleAnalysis analyze_scales(const std::vector<MatF>& weights, int bit_width, Index group_size,
                             const std::vector<std::int64_t>& amplifiers);

}  // namespace intscale
