// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#include "intscale/gemm.hpp"

#include "intscale/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>
#include <vector>

namespace intscale {
namespace {

constexpr std::int64_t kWindowLo = std::numeric_limits<std::int32_t>::min();
constexpr std::int64_t kWindowHi = std::numeric_limits<std::int32_t>::max();
// Engine guard, not part of the 32-bit window contract: an accumulator
// this large is one add away from undefined int64 territory.
constexpr std::int64_t kHardLimit = std::int64_t{1} << 62;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

// Per-worker mutable state. Workers own disjoint output rows, so merging
// is pure reduction and results cannot depend on the worker count.
struct WorkerState {
  std::int64_t conversions = 0;
  std::int64_t imads = 0;
  std::int64_t muls = 0;
  std::int64_t subs = 0;
  std::int64_t max_abs = 0;
  bool overflow = false;
  Index ov_i = -1, ov_j = -1;

  void track(std::int64_t acc, Index i, Index j) {
    max_abs = std::max(max_abs, std::abs(acc));
    if ((acc < kWindowLo || acc > kWindowHi) && !overflow) {
      overflow = true;
      ov_i = i;
      ov_j = j;
    }
    if (acc < -kHardLimit || acc > kHardLimit)
      throw Error("accumulator exceeded the 64-bit safety margin at output (" +
                  std::to_string(i) + ", " + std::to_string(j) + ")");
  }
};

template <class Fn>
KernelStats run_partitioned(Index m, const GemmOptions& opt, const Fn& rows_fn) {
  const int workers = std::max(1, opt.workers);
  std::vector<WorkerState> states(static_cast<std::size_t>(workers));

  if (workers == 1) {
    rows_fn(Index{0}, m, states[0]);
  } else {
    const Index chunk = (m + workers - 1) / workers;
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      const Index lo = std::min<Index>(m, chunk * w);
      const Index hi = std::min<Index>(m, chunk * (w + 1));
      threads.emplace_back([&, w, lo, hi] {
        try {
          rows_fn(lo, hi, states[static_cast<std::size_t>(w)]);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  KernelStats stats;
  Index ov_i = -1, ov_j = -1;
  for (const WorkerState& s : states) {
    stats.int_to_float_conversions += s.conversions;
    stats.integer_multiply_adds += s.imads;
    stats.elementwise_multiplies += s.muls;
    stats.elementwise_subtractions += s.subs;
    stats.max_abs_accumulator = std::max(stats.max_abs_accumulator, s.max_abs);
    if (s.overflow && (ov_i < 0 || s.ov_i < ov_i || (s.ov_i == ov_i && s.ov_j < ov_j))) {
      ov_i = s.ov_i;
      ov_j = s.ov_j;
    }
    stats.overflow_detected = stats.overflow_detected || s.overflow;
  }
  if (stats.overflow_detected && opt.overflow == OverflowMode::strict)
    throw OverflowError("integer accumulation left the 32-bit window at output (" +
                        std::to_string(ov_i) + ", " + std::to_string(ov_j) + ")");
  return stats;
}

std::int64_t abs_bound(const QuantParams& p) {
  return std::max(std::abs(p.qmin()), p.qmax());
}

void validate_activation(const QuantizedTensor& x) {
  if (x.params.scheme != Scheme::symmetric || x.params.granularity.kind != GranKind::per_token)
    throw ParamError("activations must be symmetric per-token quantized");
  if (x.params.bit_width != 8) throw ParamError("activations must be 8-bit");
  if (x.params.scales.size() != x.rows()) throw ParamError("activation scale count != rows");
  // The overflow bound assumes |A| <= 2^(a-1)-1. Max-based symmetric
  // quantization never emits the extra negative code, so reject it here
  // rather than weaken the bound.
  if (x.values.minCoeff() < -x.params.qmax() || x.values.maxCoeff() > x.params.qmax())
    throw ValueError("activation codes outside max-based symmetric range");
}

// Returns the effective group size (per-channel counts as one group of K).
Index validate_grouped_weight(const QuantizedTensor& x, const QuantizedTensor& w) {
  if (x.cols() != w.rows())
    throw DimensionError("activation K=" + std::to_string(x.cols()) + " vs weight rows " +
                         std::to_string(w.rows()));
  if (w.params.scheme != Scheme::symmetric) throw ParamError("weights must be symmetric");
  const GranKind kind = w.params.granularity.kind;
  if (kind != GranKind::group && kind != GranKind::per_channel)
    throw ParamError("weights must be group or per-channel quantized");
  if (w.values.minCoeff() < w.params.qmin() || w.values.maxCoeff() > w.params.qmax())
    throw ValueError("weight codes outside quantized range");
  const Index g = kind == GranKind::group ? w.params.granularity.group_size : w.rows();
  w.params.granularity.validate(w.rows(), w.cols());
  if (w.params.scales.size() != (w.rows() / g) * w.cols())
    throw ParamError("weight scale count does not match grouping");
  return g;
}

}  // namespace

std::string to_string(PathKind k) {
  switch (k) {
    case PathKind::float_scale: return "float-scale";
    case PathKind::integer_scale: return "integer-scale";
    case PathKind::coarse: return "coarse";
    case PathKind::dual_quant: return "dual-quant";
  }
  return "?";
}

PathKind path_from_string(const std::string& s) {
  if (s == "float-scale" || s == "float_scale") return PathKind::float_scale;
  if (s == "integer-scale" || s == "integer_scale") return PathKind::integer_scale;
  if (s == "coarse") return PathKind::coarse;
  if (s == "dual-quant" || s == "dual_quant") return PathKind::dual_quant;
  throw ParamError("unknown path '" + s + "'");
}

GemmResult gemm_float_scale(const QuantizedTensor& x, const QuantizedTensor& w,
                            const GemmOptions& opt) {
  validate_activation(x);
  const Index g = validate_grouped_weight(x, w);
  const Index m = x.rows(), k = x.cols(), n = w.cols();
  const Index groups = k / g;

  Timer timer;
  GemmResult res;
  res.output.resize(m, n);
  if (opt.record_partials) {
    res.abs_group_partials = MatI64::Zero(m, n * groups);
    res.output_f64.resize(m, n);
  }

  const MatQ wt = w.values.transpose();
  const std::int64_t p_worst = g * abs_bound(x.params) * abs_bound(w.params);
  const bool check_macs = p_worst > kWindowHi;

  res.stats = run_partitioned(m, opt, [&](Index lo, Index hi, WorkerState& ws) {
    for (Index i = lo; i < hi; ++i) {
      const std::int16_t* xr = x.values.data() + i * k;
      const double sa = x.params.scales[i];
      for (Index j = 0; j < n; ++j) {
        const std::int16_t* wr = wt.data() + j * k;
        const double* sw = w.params.scales.data() + j * groups;
        double od = 0.0;
        for (Index gi = 0; gi < groups; ++gi) {
          std::int64_t p = 0;
          for (Index kk = gi * g; kk < (gi + 1) * g; ++kk) {
            p += std::int32_t{xr[kk]} * std::int32_t{wr[kk]};
            if (check_macs) ws.track(p, i, j);
          }
          ws.track(p, i, j);
          od += static_cast<double>(p) * sw[gi];
          if (opt.record_partials) res.abs_group_partials(i, j * groups + gi) = std::abs(p);
        }
        const double out = od * sa;
        res.output(i, j) = static_cast<float>(out);
        if (opt.record_partials) res.output_f64(i, j) = out;
        ws.conversions += groups;
        ws.imads += k;
      }
    }
  });
  res.stats.wall_ms = timer.ms();
  return res;
}

GemmResult gemm_integer_scale(const QuantizedTensor& x, const QuantizedTensor& w,
                              const IntegerScaleSet& int_scales, const GemmOptions& opt) {
  validate_activation(x);
  const Index g = validate_grouped_weight(x, w);
  const Index m = x.rows(), k = x.cols(), n = w.cols();
  const Index groups = k / g;

  const IntegerScaleSet expect = integerize_scales(w.params.scales, int_scales.amplifier);
  if (int_scales.exponent != expect.exponent ||
      int_scales.int_scales.size() != expect.int_scales.size() ||
      (int_scales.int_scales.array() != expect.int_scales.array()).any())
    throw ParamError("integer scales are not integerize_scales(weight scales, amplifier)");

  Timer timer;
  GemmResult res;
  res.output.resize(m, n);
  if (opt.record_partials) {
    res.abs_group_partials = MatI64::Zero(m, n * groups);
    res.output_f64.resize(m, n);
  }

  const MatQ wt = w.values.transpose();
  const double amp = static_cast<double>(int_scales.amplifier);
  const std::int64_t p_worst = g * abs_bound(x.params) * abs_bound(w.params);
  const bool check_macs = p_worst > kWindowHi;

  res.stats = run_partitioned(m, opt, [&](Index lo, Index hi, WorkerState& ws) {
    for (Index i = lo; i < hi; ++i) {
      const std::int16_t* xr = x.values.data() + i * k;
      const double sa = x.params.scales[i];
      for (Index j = 0; j < n; ++j) {
        const std::int16_t* wr = wt.data() + j * k;
        const std::int32_t* ks = int_scales.int_scales.data() + j * groups;
        std::int64_t acc = 0;
        for (Index gi = 0; gi < groups; ++gi) {
          std::int64_t p = 0;
          for (Index kk = gi * g; kk < (gi + 1) * g; ++kk) {
            p += std::int32_t{xr[kk]} * std::int32_t{wr[kk]};
            if (check_macs) ws.track(p, i, j);
          }
          ws.track(p, i, j);
          acc += p * std::int64_t{ks[gi]};
          ws.track(acc, i, j);
          if (opt.record_partials) res.abs_group_partials(i, j * groups + gi) = std::abs(p);
        }
        // One conversion per output element: this is the whole point of
        // the integer-scale path.
        const double out = (static_cast<double>(acc) / amp) * sa;
        res.output(i, j) = static_cast<float>(out);
        if (opt.record_partials) res.output_f64(i, j) = out;
        ws.conversions += 1;
        ws.imads += k + groups;
      }
    }
  });
  res.stats.wall_ms = timer.ms();
  return res;
}

GemmResult gemm_coarse(const QuantizedTensor& x, const QuantizedTensor& w,
                       const GemmOptions& opt) {
  validate_activation(x);
  if (w.params.granularity.kind != GranKind::per_channel)
    throw ParamError("coarse path requires per-channel weights");
  validate_grouped_weight(x, w);
  const Index m = x.rows(), k = x.cols(), n = w.cols();

  Timer timer;
  GemmResult res;
  res.output.resize(m, n);
  if (opt.record_partials) {
    res.abs_group_partials = MatI64::Zero(m, n);
    res.output_f64.resize(m, n);
  }

  const MatQ wt = w.values.transpose();
  const std::int64_t p_worst = k * abs_bound(x.params) * abs_bound(w.params);
  const bool check_macs = p_worst > kWindowHi;

  res.stats = run_partitioned(m, opt, [&](Index lo, Index hi, WorkerState& ws) {
    for (Index i = lo; i < hi; ++i) {
      const std::int16_t* xr = x.values.data() + i * k;
      const double sa = x.params.scales[i];
      for (Index j = 0; j < n; ++j) {
        const std::int16_t* wr = wt.data() + j * k;
        std::int64_t acc = 0;
        for (Index kk = 0; kk < k; ++kk) {
          acc += std::int32_t{xr[kk]} * std::int32_t{wr[kk]};
          if (check_macs) ws.track(acc, i, j);
        }
        ws.track(acc, i, j);
        const double out = static_cast<double>(acc) * w.params.scales[j] * sa;
        res.output(i, j) = static_cast<float>(out);
        if (opt.record_partials) {
          res.abs_group_partials(i, j) = std::abs(acc);
          res.output_f64(i, j) = out;
        }
        ws.conversions += 1;
        ws.imads += k;
      }
    }
  });
  res.stats.wall_ms = timer.ms();
  return res;
}

DualInnerQuant dual_inner_quantize(const QuantizedTensor& w_outer, Index group_size) {
  if (w_outer.params.bit_width != 8 || w_outer.params.scheme != Scheme::symmetric ||
      w_outer.params.granularity.kind != GranKind::per_channel)
    throw ParamError("dual quantization layers over an 8-bit per-channel symmetric weight");
  if (group_size < 1 || w_outer.rows() % group_size != 0)
    throw ParamError("group size must divide the reduction dimension");

  const Index k = w_outer.rows(), n = w_outer.cols();
  const Index groups = k / group_size;
  DualInnerQuant inner;
  inner.group_size = group_size;
  inner.values.resize(k, n);
  inner.scales.resize(groups * n);
  inner.zero_points.resize(groups * n);

  for (Index j = 0; j < n; ++j) {
    for (Index t = 0; t < groups; ++t) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Index r = t * group_size; r < (t + 1) * group_size; ++r) {
        lo = std::min(lo, static_cast<double>(w_outer.values(r, j)));
        hi = std::max(hi, static_cast<double>(w_outer.values(r, j)));
      }
      const double s = hi == lo ? 1.0 : (hi - lo) / 15.0;
      const auto z = static_cast<std::int32_t>(
          std::clamp<std::int64_t>(std::llround(-lo / s), 0, 15));
      const Index u = j * groups + t;
      inner.scales[u] = s;
      inner.zero_points[u] = z;
      for (Index r = t * group_size; r < (t + 1) * group_size; ++r) {
        const std::int64_t q =
            std::llround(static_cast<double>(w_outer.values(r, j)) / s) + z;
        inner.values(r, j) = static_cast<std::int16_t>(std::clamp<std::int64_t>(q, 0, 15));
      }
    }
  }
  return inner;
}

GemmResult gemm_dual_quant(const QuantizedTensor& x, const QuantizedTensor& w_outer,
                           const DualInnerQuant& inner, const GemmOptions& opt) {
  validate_activation(x);
  if (w_outer.params.bit_width != 8 || w_outer.params.scheme != Scheme::symmetric ||
      w_outer.params.granularity.kind != GranKind::per_channel)
    throw ParamError("dual-quant outer weight must be 8-bit per-channel symmetric");
  if (x.cols() != w_outer.rows())
    throw DimensionError("activation K=" + std::to_string(x.cols()) + " vs weight rows " +
                         std::to_string(w_outer.rows()));
  const Index m = x.rows(), k = x.cols(), n = w_outer.cols();
  const Index g = inner.group_size;
  if (g < 1 || k % g != 0) throw ParamError("inner group size must divide K");
  const Index groups = k / g;
  if (inner.values.rows() != k || inner.values.cols() != n)
    throw DimensionError("inner values shape does not match the outer weight");
  if (inner.scales.size() != groups * n || inner.zero_points.size() != groups * n)
    throw ParamError("inner parameter count does not match the grouping");
  if (inner.values.minCoeff() < 0 || inner.values.maxCoeff() > 15)
    throw ValueError("inner codes outside [0, 15]");
  for (Index u = 0; u < inner.zero_points.size(); ++u) {
    if (inner.zero_points[u] < 0 || inner.zero_points[u] > 15)
      throw ValueError("inner zero point outside [0, 15]");
    if (!(inner.scales[u] > 0.0) || !std::isfinite(inner.scales[u]))
      throw ValueError("inner scale must be positive and finite");
  }
  if (w_outer.params.scales.size() != n) throw ParamError("outer scale count != channels");

  Timer timer;
  GemmResult res;
  res.output.resize(m, n);
  if (opt.record_partials) res.output_f64.resize(m, n);

  const MatQ it = inner.values.transpose();

  res.stats = run_partitioned(m, opt, [&](Index lo, Index hi, WorkerState& ws) {
    for (Index i = lo; i < hi; ++i) {
      const std::int16_t* xr = x.values.data() + i * k;
      const double sa = x.params.scales[i];
      for (Index j = 0; j < n; ++j) {
        const std::int16_t* wr = it.data() + j * k;
        double cd = 0.0;
        for (Index gi = 0; gi < groups; ++gi) {
          const Index u = j * groups + gi;
          const double si = inner.scales[u];
          const std::int32_t z = inner.zero_points[u];
          for (Index kk = gi * g; kk < (gi + 1) * g; ++kk) {
            const double wrec = static_cast<double>(std::int32_t{wr[kk]} - z) * si;
            cd += static_cast<double>(xr[kk]) * wrec;
          }
        }
        const double out = cd * w_outer.params.scales[j] * sa;
        res.output(i, j) = static_cast<float>(out);
        if (opt.record_partials) res.output_f64(i, j) = out;
        // Reconstruction work the symmetric paths do not pay: a subtract,
        // a scale multiply and a real product per inner element.
        ws.conversions += k;
        ws.muls += k;
        ws.subs += k;
      }
    }
  });
  res.stats.wall_ms = timer.ms();
  return res;
}

MatF gemm_oracle(const QuantizedTensor& x, const QuantizedTensor& w, const PathConfig& path) {
  validate_activation(x);
  const Index m = x.rows(), k = x.cols(), n = w.cols();
  MatF out(m, n);

  switch (path.kind) {
    case PathKind::float_scale:
    case PathKind::integer_scale: {
      const Index g = validate_grouped_weight(x, w);
      const Index groups = k / g;
      const IntegerScaleSet* set = nullptr;
      IntegerScaleSet own;
      if (path.kind == PathKind::integer_scale) {
        if (!path.int_scales) throw ParamError("integer-scale path needs an IntegerScaleSet");
        own = integerize_scales(w.params.scales, path.int_scales->amplifier);
        set = &own;
      }
      for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
          double od = 0.0;
          std::int64_t acc = 0;
          for (Index gi = 0; gi < groups; ++gi) {
            std::int64_t p = 0;
            for (Index kk = gi * g; kk < (gi + 1) * g; ++kk)
              p += std::int64_t{x.values(i, kk)} * std::int64_t{w.values(kk, j)};
            if (set)
              acc += p * std::int64_t{set->int_scales[j * groups + gi]};
            else
              od += static_cast<double>(p) * w.params.scales[j * groups + gi];
          }
          if (set) od = static_cast<double>(acc) / static_cast<double>(set->amplifier);
          out(i, j) = static_cast<float>(od * x.params.scales[i]);
        }
      }
      return out;
    }
    case PathKind::coarse: {
      if (w.params.granularity.kind != GranKind::per_channel)
        throw ParamError("coarse path requires per-channel weights");
      validate_grouped_weight(x, w);
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
          std::int64_t acc = 0;
          for (Index kk = 0; kk < k; ++kk)
            acc += std::int64_t{x.values(i, kk)} * std::int64_t{w.values(kk, j)};
          out(i, j) =
              static_cast<float>(static_cast<double>(acc) * w.params.scales[j] * x.params.scales[i]);
        }
      return out;
    }
    case PathKind::dual_quant: {
      if (!path.inner) throw ParamError("dual-quant path needs inner parameters");
      const DualInnerQuant& inner = *path.inner;
      if (x.cols() != w.rows()) throw DimensionError("shape mismatch");
      const Index g = inner.group_size;
      if (g < 1 || k % g != 0) throw ParamError("inner group size must divide K");
      const Index groups = k / g;
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
          double cd = 0.0;
          for (Index kk = 0; kk < k; ++kk) {
            const Index u = j * groups + kk / g;
            const double wrec =
                static_cast<double>(std::int32_t{inner.values(kk, j)} - inner.zero_points[u]) *
                inner.scales[u];
            cd += static_cast<double>(x.values(i, kk)) * wrec;
          }
          out(i, j) = static_cast<float>(cd * w.params.scales[j] * x.params.scales[i]);
        }
      return out;
    }
  }
  throw ParamError("unknown path");
}

GemmResult run_layer(const QuantizedTensor& x, const QuantizedTensor& w, const PathConfig& path,
                     FallbackPolicy fallback, const GemmOptions& opt) {
  switch (path.kind) {
    case PathKind::float_scale: return gemm_float_scale(x, w, opt);
    case PathKind::coarse: return gemm_coarse(x, w, opt);
    case PathKind::dual_quant: {
      if (!path.inner) throw ParamError("dual-quant path needs inner parameters");
      return gemm_dual_quant(x, w, *path.inner, opt);
    }
    case PathKind::integer_scale: {
      if (!path.int_scales) throw ParamError("integer-scale path needs an IntegerScaleSet");
      if (fallback == FallbackPolicy::float_scale_on_overflow_risk) {
        const Index g = w.params.granularity.kind == GranKind::group
                            ? w.params.granularity.group_size
                            : w.rows();
        const OverflowReport report = overflow_analyzer(
            x.cols(), g, x.params.bit_width, w.params.bit_width, *path.int_scales);
        if (!report.safe) {
          GemmResult res = gemm_float_scale(x, w, opt);
          res.stats.fallback_applied = true;
          return res;
        }
      }
      return gemm_integer_scale(x, w, *path.int_scales, opt);
    }
  }
  throw ParamError("unknown path");
}

}  // namespace intscale
