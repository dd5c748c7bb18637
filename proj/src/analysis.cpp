// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#include "intscale/analysis.hpp"

#include "intscale/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace intscale {
namespace {

constexpr std::int64_t kInt32Max = std::numeric_limits<std::int32_t>::max();

std::int64_t saturating_to_int64(unsigned __int128 v) {
  const auto cap = static_cast<unsigned __int128>(std::numeric_limits<std::int64_t>::max());
  return v > cap ? std::numeric_limits<std::int64_t>::max() : static_cast<std::int64_t>(v);
}

}  // namespace

OverflowReport overflow_analyzer(Index k, Index group_size, int act_bits, int weight_bits,
                                 const IntegerScaleSet& int_scales) {
  if (act_bits != 4 && act_bits != 8) throw ParamError("activation bits must be 4 or 8");
  if (weight_bits != 4 && weight_bits != 8) throw ParamError("weight bits must be 4 or 8");
  if (k < 1 || group_size < 1 || k % group_size != 0)
    throw ParamError("group size must divide K");
  const Index groups = k / group_size;
  if (int_scales.int_scales.size() < groups || int_scales.int_scales.size() % groups != 0)
    throw ParamError("integer scale count incompatible with the grouping");
  for (Index i = 0; i < int_scales.int_scales.size(); ++i)
    if (int_scales.int_scales[i] < 1) throw ParamError("integer scales must be >= 1");

  const std::int64_t a_max = (std::int64_t{1} << (act_bits - 1)) - 1;
  const std::int64_t w_max = std::int64_t{1} << (weight_bits - 1);
  const auto per_mac = static_cast<unsigned __int128>(group_size) *
                       static_cast<unsigned __int128>(a_max) *
                       static_cast<unsigned __int128>(w_max);

  // One column's worth of scales sums directly; a whole K x N set is
  // judged by its worst column.
  const Index columns = int_scales.int_scales.size() / groups;
  unsigned __int128 worst = 0;
  for (Index c = 0; c < columns; ++c) {
    unsigned __int128 col = 0;
    for (Index g = 0; g < groups; ++g)
      col += per_mac * static_cast<unsigned __int128>(int_scales.int_scales[c * groups + g]);
    worst = std::max(worst, col);
  }

  OverflowReport r;
  r.static_bound = saturating_to_int64(worst);
  r.safe = r.static_bound <= kInt32Max;
  r.headroom_bits = std::log2(static_cast<double>(kInt32Max)) -
                    std::log2(static_cast<double>(r.static_bound));
  return r;
}

std::vector<AblationRow> run_ablation(const std::vector<MatF>& weights,
                                      const std::vector<std::int64_t>& amplifiers,
                                      Index group_size) {
  if (weights.empty()) throw ParamError("no weight matrices to ablate");
  if (amplifiers.empty()) throw ParamError("no amplifiers to ablate");

  // The sweep studies the deployment configuration: 4-bit symmetric
  // weights at the given group size.
  struct PerMatrix {
    VecD scales;
    VecD code_sumsq;    // per unit: sum of Q^2
    VecD residual_dot;  // per unit: sum of (x - Q*s) * Q
    double residual_sumsq = 0.0;
    Index elements = 0;
  };
  std::vector<PerMatrix> mats;
  std::int64_t total_elements = 0;
  for (const MatF& w : weights) {
    const QuantizedTensor q =
        quantize(w, 4, Scheme::symmetric, Granularity::group_of(group_size));
    PerMatrix m;
    m.scales = q.params.scales;
    m.elements = q.values.size();
    m.code_sumsq = VecD::Zero(m.scales.size());
    m.residual_dot = VecD::Zero(m.scales.size());
    const Granularity& g = q.params.granularity;
    for (Index r = 0; r < q.rows(); ++r)
      for (Index c = 0; c < q.cols(); ++c) {
        const Index u = g.unit_of(q.rows(), r, c);
        const double code = q.values(r, c);
        const double residual = static_cast<double>(w(r, c)) - code * m.scales[u];
        m.code_sumsq[u] += code * code;
        m.residual_dot[u] += residual * code;
        m.residual_sumsq += residual * residual;
      }
    total_elements += m.elements;
    mats.push_back(std::move(m));
  }

  std::vector<std::int64_t> order = amplifiers;
  std::stable_sort(order.begin(), order.end());

  std::vector<AblationRow> rows;
  rows.reserve(order.size());
  for (const std::int64_t a : order) {
    AblationRow row;
    row.amplifier = a;
    double err_float = 0.0, err_orig = 0.0;
    for (const PerMatrix& m : mats) {
      const IntegerScaleSet set = integerize_scales(m.scales, a);
      err_orig += m.residual_sumsq;
      for (Index u = 0; u < m.scales.size(); ++u) {
        // Integer-scale reconstruction differs from the float-scale one by
        // Q * d per element, with d fixed per unit; expanding the squares
        // reduces both MSE columns to three per-unit moments.
        const double d =
            static_cast<double>(set.int_scales[u]) / static_cast<double>(a) - m.scales[u];
        err_float += d * d * m.code_sumsq[u];
        err_orig += d * d * m.code_sumsq[u] - 2.0 * d * m.residual_dot[u];
      }
    }
    row.mse_vs_float = err_float / static_cast<double>(total_elements);
    row.mse_vs_original = err_orig / static_cast<double>(total_elements);
    rows.push_back(row);
  }
  return rows;
}

KernelStats expected_counters(PathKind path, Index m, Index n, Index k, Index group) {
  KernelStats s;
  const Index groups = k / group;
  switch (path) {
    case PathKind::float_scale:
      s.int_to_float_conversions = m * n * groups;
      s.integer_multiply_adds = m * n * k;
      break;
    case PathKind::integer_scale:
      s.int_to_float_conversions = m * n;
      s.integer_multiply_adds = m * n * (k + groups);
      break;
    case PathKind::coarse:
      s.int_to_float_conversions = m * n;
      s.integer_multiply_adds = m * n * k;
      break;
    case PathKind::dual_quant:
      s.int_to_float_conversions = m * n * k;
      s.integer_multiply_adds = 0;
      s.elementwise_multiplies = m * n * k;
      s.elementwise_subtractions = m * n * k;
      break;
  }
  return s;
}

std::vector<BenchRow> run_bench(const BenchShape& shape, const std::vector<PathKind>& paths,
                                int repeats, std::uint64_t seed) {
  if (repeats < 3) throw ParamError("bench needs at least 3 repeats");
  if (paths.empty()) throw ParamError("no paths to bench");
  if (shape.m < 1 || shape.k < 1 || shape.n < 1) throw ParamError("bench shape must be positive");
  if (shape.group < 1 || shape.k % shape.group != 0)
    throw ParamError("group size must divide K");

  const MatF wf = shape.k % 128 == 0
                      ? generate_synthetic(shape.k, shape.n, LlamaLike{}, seed)
                      : generate_synthetic(shape.k, shape.n, Uniform{-0.05, 0.05}, seed);
  const MatF xf = generate_synthetic(shape.m, shape.k, Gaussian{1.0}, seed + 1);
  const QuantizedTensor xq = quantize(xf, 8, Scheme::symmetric, Granularity::per_token());

  std::vector<BenchRow> rows;
  for (const PathKind path : paths) {
    QuantizedTensor wq;
    IntegerScaleSet set;
    DualInnerQuant inner;
    switch (path) {
      case PathKind::float_scale:
      case PathKind::integer_scale:
        wq = quantize(wf, 4, Scheme::symmetric, Granularity::group_of(shape.group));
        if (path == PathKind::integer_scale)
          set = integerize_scales(wq.params.scales, search_amplifier(wq.params.scales));
        break;
      case PathKind::coarse:
        wq = quantize(wf, 4, Scheme::symmetric, Granularity::per_channel());
        break;
      case PathKind::dual_quant:
        wq = quantize(wf, 8, Scheme::symmetric, Granularity::per_channel());
        inner = dual_inner_quantize(wq, shape.group);
        break;
    }

    BenchRow row;
    row.path = path;
    row.shape = shape;
    std::vector<double> walls;
    bool stable = true;
    for (int r = 0; r < repeats; ++r) {
      GemmResult res;
      switch (path) {
        case PathKind::float_scale: res = gemm_float_scale(xq, wq); break;
        case PathKind::integer_scale: res = gemm_integer_scale(xq, wq, set); break;
        case PathKind::coarse: res = gemm_coarse(xq, wq); break;
        case PathKind::dual_quant: res = gemm_dual_quant(xq, wq, inner); break;
      }
      walls.push_back(res.stats.wall_ms);
      if (r == 0) {
        row.conversions = res.stats.int_to_float_conversions;
        row.imads = res.stats.integer_multiply_adds;
      } else {
        stable = stable && row.conversions == res.stats.int_to_float_conversions &&
                 row.imads == res.stats.integer_multiply_adds;
      }
    }
    std::sort(walls.begin(), walls.end());
    const std::size_t mid = walls.size() / 2;
    row.median_wall_ms =
        walls.size() % 2 == 1 ? walls[mid] : 0.5 * (walls[mid - 1] + walls[mid]);

    const KernelStats expect = expected_counters(path, shape.m, shape.n, shape.k, shape.group);
    row.expected_conversions = expect.int_to_float_conversions;
    row.expected_imads = expect.integer_multiply_adds;
    row.counters_ok = stable && row.conversions == row.expected_conversions &&
                      row.imads == row.expected_imads;
    rows.push_back(row);
  }
  return rows;
}

std::string to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::json: return "json";
    case ReportFormat::csv: return "csv";
    case ReportFormat::text_table: return "text-table";
  }
  return "?";
}

ReportFormat format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "text-table" || s == "text_table" || s == "table") return ReportFormat::text_table;
  throw ParamError("unknown format '" + s + "'");
}

OrderedJson gemm_report_row(PathKind path, Index m, Index n, Index k, Index group,
                            const KernelStats& stats, std::optional<bool> fallback) {
  OrderedJson row;
  row["path"] = to_string(path);
  row["M"] = m;
  row["N"] = n;
  row["K"] = k;
  row["group"] = group;
  row["conversions"] = stats.int_to_float_conversions;
  row["imads"] = stats.integer_multiply_adds;
  row["max_abs_acc"] = stats.max_abs_accumulator;
  row["overflow"] = stats.overflow_detected;
  if (fallback.has_value()) row["fallback"] = *fallback;
  row["wall_ms"] = stats.wall_ms;
  return row;
}

OrderedJson ablation_report_rows(const std::vector<AblationRow>& rows) {
  OrderedJson out = OrderedJson::array();
  for (const AblationRow& r : rows) {
    OrderedJson row;
    row["amplifier"] = r.amplifier;
    row["mse_vs_float"] = r.mse_vs_float;
    row["mse_vs_original"] = r.mse_vs_original;
    out.push_back(std::move(row));
  }
  return out;
}

OrderedJson bench_report_rows(const std::vector<BenchRow>& rows) {
  OrderedJson out = OrderedJson::array();
  for (const BenchRow& r : rows) {
    OrderedJson row;
    row["path"] = to_string(r.path);
    row["M"] = r.shape.m;
    row["N"] = r.shape.n;
    row["K"] = r.shape.k;
    row["group"] = r.shape.group;
    row["conversions"] = r.conversions;
    row["expected_conversions"] = r.expected_conversions;
    row["imads"] = r.imads;
    row["expected_imads"] = r.expected_imads;
    row["counters_ok"] = r.counters_ok;
    row["median_wall_ms"] = r.median_wall_ms;
    out.push_back(std::move(row));
  }
  return out;
}

OrderedJson overflow_report_json(const OverflowReport& r) {
  OrderedJson out;
  out["static_bound"] = r.static_bound;
  out["observed_max"] = r.observed_max;
  out["headroom_bits"] = r.headroom_bits;
  out["safe"] = r.safe;
  return out;
}

OrderedJson scale_analysis_json(const ScaleAnalysis& a) {
  OrderedJson out;
  OrderedJson hist = OrderedJson::object();
  for (const auto& [exponent, count] : a.bit_shift_histogram)
    hist[std::to_string(exponent)] = count;
  out["bit_shift_histogram"] = std::move(hist);
  out["amplified_range"] = {a.amplified_min, a.amplified_max};
  OrderedJson mse = OrderedJson::object();
  for (const auto& [amp, v] : a.mse_by_amplifier) mse[std::to_string(amp)] = v;
  out["mse_by_amplifier"] = std::move(mse);
  return out;
}

namespace {

std::string csv_cell(const OrderedJson& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

void require_rows(const OrderedJson& results) {
  if (results.is_object() && !results.empty()) return;
  if (results.is_array() && !results.empty()) {
    for (const auto& row : results)
      if (!row.is_object() || row.empty()) throw ParamError("report rows must be objects");
    return;
  }
  throw ParamError("empty report");
}

}  // namespace

std::string emit_report(const OrderedJson& results, ReportFormat format) {
  require_rows(results);
  if (format == ReportFormat::json) return results.dump(2) + "\n";

  const OrderedJson rows = results.is_array() ? results : OrderedJson::array({results});
  std::vector<std::string> keys;
  for (auto it = rows[0].begin(); it != rows[0].end(); ++it) keys.push_back(it.key());

  if (format == ReportFormat::csv) {
    std::ostringstream out;
    for (std::size_t i = 0; i < keys.size(); ++i) out << (i ? "," : "") << keys[i];
    out << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < keys.size(); ++i)
        out << (i ? "," : "") << (row.contains(keys[i]) ? csv_cell(row[keys[i]]) : "");
      out << "\n";
    }
    return out.str();
  }

  std::vector<std::size_t> widths;
  for (const std::string& key : keys) widths.push_back(key.size());
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::string> line;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      line.push_back(row.contains(keys[i]) ? csv_cell(row[keys[i]]) : "");
      widths[i] = std::max(widths[i], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  std::ostringstream out;
  auto pad = [&](const std::string& s, std::size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  for (std::size_t i = 0; i < keys.size(); ++i)
    out << (i ? "  " : "") << pad(keys[i], widths[i]);
  out << "\n";
  for (std::size_t i = 0; i < keys.size(); ++i)
    out << (i ? "  " : "") << std::string(widths[i], '-');
  out << "\n";
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < keys.size(); ++i) out << (i ? "  " : "") << pad(line[i], widths[i]);
    out << "\n";
  }
  return out.str();
}

void write_report(const OrderedJson& results, ReportFormat format,
                  const std::filesystem::path& out) {
  const std::string text = emit_report(results, format);
  std::ofstream f(out);
  if (!f) throw IoError("cannot open " + out.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed on " + out.string());
}

namespace {

bool is_timing_key(const std::string& key) {
  return key == "wall_ms" || key == "median_wall_ms";
}

void strip_json_timing(OrderedJson& v) {
  if (v.is_object()) {
    for (auto it = v.begin(); it != v.end();)
      it = is_timing_key(it.key()) ? v.erase(it) : std::next(it);
    for (auto& [key, child] : v.items()) strip_json_timing(child);
  } else if (v.is_array()) {
    for (auto& child : v) strip_json_timing(child);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::string strip_timing(const std::string& report, ReportFormat format) {
  if (format == ReportFormat::json) {
    OrderedJson v = OrderedJson::parse(report);
    strip_json_timing(v);
    return v.dump(2) + "\n";
  }
  if (format == ReportFormat::csv) {
    std::istringstream in(report);
    std::ostringstream out;
    std::string line;
    std::vector<std::size_t> keep;
    bool first = true;
    while (std::getline(in, line)) {
      const std::vector<std::string> fields = split_csv_line(line);
      if (first) {
        for (std::size_t i = 0; i < fields.size(); ++i)
          if (!is_timing_key(fields[i])) keep.push_back(i);
        first = false;
      }
      for (std::size_t i = 0; i < keep.size(); ++i)
        out << (i ? "," : "") << (keep[i] < fields.size() ? fields[keep[i]] : "");
      out << "\n";
    }
    return out.str();
  }
  throw ParamError("only json and csv reports can be stripped");
}

}  // namespace intscale
