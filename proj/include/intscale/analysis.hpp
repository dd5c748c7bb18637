// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "intscale/gemm.hpp"
#include "intscale/integer_scale.hpp"
#include "intscale/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace intscale {

using OrderedJson = nlohmann::ordered_json;

/// Worst-case bound on the integer-scale path's scaled accumulation,
/// compared against the 32-bit ceiling. The bound assumes symmetric
/// operand magnitudes A_max = 2^(a-1)-1 and W_max = 2^(w-1); observed_max
/// is filled in by callers from executed-kernel stats (0 when no run
/// happened) and can never exceed static_bound.
struct OverflowReport {
  std::int64_t static_bound = 0;
  std::int64_t observed_max = 0;
  double headroom_bits = 0.0;  // log2((2^31 - 1) / static_bound)
  bool safe = false;           // static_bound <= 2^31 - 1
};

/// Computes the static bound Σ_g group_size * A_max * W_max * int_scale_g.
/// int_scales may cover one column (K / group_size entries, the sum is
/// taken directly) or a whole K x N weight (the worst column governs).
OverflowReport overflow_analyzer(Index k, Index group_size, int act_bits, int weight_bits,
                                 const IntegerScaleSet& int_scales);

struct AblationRow {
  std::int64_t amplifier = 0;
  /// Reconstruction MSE of integer-scale dequantization against the
  /// float-scale reconstruction of the same codes.
  double mse_vs_float = 0.0;
  /// Same reconstruction measured against the original weights.
  double mse_vs_original = 0.0;
};

/// Group-quantizes the weights once, then sweeps the amplifier list.
/// Rows come back ordered by amplifier (duplicates kept). Throws
/// ParamError on an empty weight or amplifier list.
std::vector<AblationRow> run_ablation(const std::vector<MatF>& weights,
                                      const std::vector<std::int64_t>& amplifiers,
                                      Index group_size);

struct BenchShape {
  Index m = 0;
  Index k = 0;
  Index n = 0;
  Index group = 128;
};

struct BenchRow {
  PathKind path = PathKind::integer_scale;
  BenchShape shape;
  std::int64_t conversions = 0;
  std::int64_t expected_conversions = 0;
  std::int64_t imads = 0;
  std::int64_t expected_imads = 0;
  /// Counters matched their closed forms and were identical on every
  /// repeat. Wall time is informational only and never gates anything.
  bool counters_ok = false;
  double median_wall_ms = 0.0;
};

/// Closed-form operation counts per path for an M x K x N problem:
///   float_scale:   conversions M*N*(K/g), imads M*N*K
///   integer_scale: conversions M*N,       imads M*N*(K + K/g)
///   coarse:        conversions M*N,       imads M*N*K
///   dual_quant:    conversions M*N*K,     imads 0, element-wise ops M*N*K each
KernelStats expected_counters(PathKind path, Index m, Index n, Index k, Index group);

/// Runs each path `repeats` times on one synthesized problem (weights
/// llama_like, activations gaussian, both seeded) and reports the median
/// wall time plus counter verification. repeats < 3 → ParamError.
std::vector<BenchRow> run_bench(const BenchShape& shape, const std::vector<PathKind>& paths,
                                int repeats, std::uint64_t seed);

enum class ReportFormat { json, csv, text_table };

std::string to_string(ReportFormat f);
ReportFormat format_from_string(const std::string& s);

/// Flat report rows with the pinned key orders. Timing keys ("wall_ms",
/// "median_wall_ms") always come last so the algebraic prefix of a report
/// is diffable across environments.
/// The gemm row keeps its ten-key schema; `fallback`, when supplied,
/// inserts a "fallback" key before the timing field (used by runs where a
/// substitution policy is active).
OrderedJson gemm_report_row(PathKind path, Index m, Index n, Index k, Index group,
                            const KernelStats& stats,
                            std::optional<bool> fallback = std::nullopt);
OrderedJson ablation_report_rows(const std::vector<AblationRow>& rows);
OrderedJson bench_report_rows(const std::vector<BenchRow>& rows);
OrderedJson overflow_report_json(const OverflowReport& r);
OrderedJson scale_analysis_json(const ScaleAnalysis& a);

/// Renders an array of uniform flat rows (or a single row object).
/// json: two-space indented dump. csv: header row from the first row's
/// keys. text-table: padded columns. Empty results → ParamError.
std::string emit_report(const OrderedJson& results, ReportFormat format);

/// emit_report + write to disk (IoError on failure).
void write_report(const OrderedJson& results, ReportFormat format,
                  const std::filesystem::path& out);

/// Drops timing fields/columns from a rendered report so deterministic
/// content can be compared byte-for-byte across runs.
std::string strip_timing(const std::string& report, ReportFormat format);

}  // namespace intscale
