// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#include "intscale/integer_scale.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace intscale {
namespace {

void require_positive_scales(const VecD& scales) {
  if (scales.size() == 0) throw ParamError("scale list is empty");
  for (Index i = 0; i < scales.size(); ++i)
    if (!std::isfinite(scales[i]) || scales[i] <= 0.0)
      throw ParamError("scale " + std::to_string(i) + " is not a positive finite number");
}

}  // namespace

int search_amplifier_exponent(const VecD& scales) {
  require_positive_scales(scales);
  const double s_min = scales.minCoeff();
  int exponent = 0;
  double amplified = s_min;
  // Doubling a double only moves its exponent, so the >= 1 comparisons
  // are exact; no accumulated rounding to worry about.
  while (amplified < 1.0) {
    if (exponent >= 62) throw ParamError("smallest scale is too small to amplify");
    amplified *= 2.0;
    ++exponent;
  }
  return exponent;
}

std::int64_t search_amplifier(const VecD& scales) {
  return std::int64_t{1} << search_amplifier_exponent(scales);
}

IntegerScaleSet integerize_scales(const VecD& scales, std::int64_t amplifier) {
  require_positive_scales(scales);
  if (amplifier < 1 || (amplifier & (amplifier - 1)) != 0)
    throw ParamError("amplifier must be a power of two >= 1, got " + std::to_string(amplifier));

  IntegerScaleSet set;
  set.amplifier = amplifier;
  set.exponent = std::countr_zero(static_cast<std::uint64_t>(amplifier));
  set.int_scales.resize(scales.size());
  for (Index i = 0; i < scales.size(); ++i) {
    const std::int64_t k = std::llround(scales[i] * static_cast<double>(amplifier));
    if (k > std::numeric_limits<std::int32_t>::max())
      throw OverflowError("amplified scale " + std::to_string(i) +
                          " exceeds int32; amplifier too large for this scale set");
    // A scale that rounds to 0 would annihilate its group; floor at 1 and
    // accept the upward bias (this is what degrades small amplifiers).
    set.int_scales[i] = static_cast<std::int32_t>(std::max<std::int64_t>(k, 1));
  }
  return set;
}

double scale_relative_mse(const VecD& scales, const IntegerScaleSet& s) {
  require_positive_scales(scales);
  if (s.int_scales.size() != scales.size())
    throw DimensionError("integer scale count does not match float scale count");
  double acc = 0.0;
  for (Index i = 0; i < scales.size(); ++i) {
    const double rel =
        (static_cast<double>(s.int_scales[i]) / static_cast<double>(s.amplifier) - scales[i]) /
        scales[i];
    acc += rel * rel;
  }
  return acc / static_cast<double>(scales.size());
}

ScaleAnalysis analyze_scales(const std::vector<MatF>& weights, int bit_width, Index group_size,
                             const std::vector<std::int64_t>& amplifiers) {
  if (weights.empty()) throw ParamError("no weight matrices to analyze");

  ScaleAnalysis out;
  out.amplified_min = std::numeric_limits<std::int32_t>::max();
  out.amplified_max = std::numeric_limits<std::int32_t>::min();

  struct PerMatrix {
    VecD scales;
    VecD code_sumsq;  // per unit, drives the MSE sweep
    Index elements = 0;
  };
  std::vector<PerMatrix> mats;
  mats.reserve(weights.size());

  for (const MatF& w : weights) {
    const QuantizedTensor q =
        quantize(w, bit_width, Scheme::symmetric, Granularity::group_of(group_size));
    PerMatrix m;
    m.scales = q.params.scales;
    m.elements = q.values.size();
    m.code_sumsq = VecD::Zero(m.scales.size());
    const Granularity& g = q.params.granularity;
    for (Index r = 0; r < q.rows(); ++r)
      for (Index c = 0; c < q.cols(); ++c) {
        const double v = q.values(r, c);
        m.code_sumsq[g.unit_of(q.rows(), r, c)] += v * v;
      }

    const int exponent = search_amplifier_exponent(m.scales);
    ++out.bit_shift_histogram[exponent];
    const IntegerScaleSet own = integerize_scales(m.scales, std::int64_t{1} << exponent);
    out.amplified_min = std::min(out.amplified_min, own.int_scales.minCoeff());
    out.amplified_max = std::max(out.amplified_max, own.int_scales.maxCoeff());

    mats.push_back(std::move(m));
  }

  for (const std::int64_t a : amplifiers) {
    double err = 0.0;
    std::int64_t elements = 0;
    for (const PerMatrix& m : mats) {
      const IntegerScaleSet set = integerize_scales(m.scales, a);
      for (Index u = 0; u < m.scales.size(); ++u) {
        const double d =
            static_cast<double>(set.int_scales[u]) / static_cast<double>(a) - m.scales[u];
        err += d * d * m.code_sumsq[u];
      }
      elements += m.elements;
    }
    out.mse_by_amplifier[a] = err / static_cast<double>(elements);
  }
  return out;
}

}  // namespace intscale
