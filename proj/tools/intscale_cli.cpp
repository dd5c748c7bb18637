// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
//
// intscale: quantize tensors, run instrumented quantized GEMMs, search and
// ablate scale amplifiers, and analyze integer-accumulator overflow risk.
//
// Exit codes: 0 success, 2 validation error, 3 overflow in strict mode.

#include "intscale/analysis.hpp"
#include "intscale/gemm.hpp"
#include "intscale/integer_scale.hpp"
#include "intscale/quantize.hpp"
#include "intscale/tensor_io.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace {

using namespace intscale;

struct Config {
  std::string command;
  std::string input;
  std::vector<std::string> weights;
  std::string activations;
  std::int64_t m = 0, k = 0, n = 0;
  int bits_w = 4;
  int bits_a = 8;
  std::string scheme = "symmetric";
  std::int64_t group = 128;
  std::string granularity = "group";
  std::string amplifier = "1024";
  std::string amplifiers = "128,512,1024,4096";
  std::string paths = "integer-scale";
  std::string overflow = "permissive";
  std::string fallback = "none";
  std::uint64_t seed = 0;
  int workers = 1;
  int repeats = 5;
  std::string out;
  std::string format = "json";
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw ParamError("");
    return v;
  } catch (const std::exception&) {
    throw ParamError("cannot parse " + what + " '" + s + "'");
  }
}

// --amplifier is either a power-of-two integer or "heuristic".
std::optional<std::int64_t> parse_amplifier(const std::string& s) {
  if (s == "heuristic") return std::nullopt;
  const std::int64_t a = parse_int(s, "amplifier");
  if (a < 1 || (a & (a - 1)) != 0)
    throw ParamError("amplifier must be a power of two >= 1 or 'heuristic'");
  return a;
}

std::vector<std::int64_t> parse_amplifier_list(const std::string& s) {
  std::vector<std::int64_t> out;
  for (const std::string& part : split(s, ',')) out.push_back(parse_int(part, "amplifier"));
  return out;
}

std::vector<PathKind> parse_paths(const std::string& s) {
  std::vector<PathKind> out;
  for (const std::string& part : split(s, ',')) out.push_back(path_from_string(part));
  return out;
}

void require_shape(const Config& cfg, bool need_m) {
  if ((need_m && cfg.m < 1) || cfg.k < 1 || cfg.n < 1)
    throw ParamError("no input file given, so the shape flags (" +
                     std::string(need_m ? "--m, " : "") + "--k, --n) must be set");
}

// Weight-shaped synthesis: group-structured magnitudes when the reduction
// dimension allows 128-row groups, a flat band otherwise.
MatF synth_weights(Index k, Index n, std::uint64_t seed) {
  return k % 128 == 0 ? generate_synthetic(k, n, LlamaLike{}, seed)
                      : generate_synthetic(k, n, Uniform{-0.05, 0.05}, seed);
}

std::vector<MatF> load_weight_list(const Config& cfg) {
  std::vector<std::string> paths = cfg.weights;
  if (paths.empty() && !cfg.input.empty()) paths.push_back(cfg.input);
  std::vector<MatF> mats;
  if (paths.empty()) {
    require_shape(cfg, /*need_m=*/false);
    mats.push_back(synth_weights(cfg.k, cfg.n, cfg.seed));
  } else {
    for (const std::string& p : paths) mats.push_back(read_float_tensor(p));
  }
  return mats;
}

QuantizedTensor load_activations(const Config& cfg, Index k) {
  if (!cfg.activations.empty()) {
    TensorData t = read_tensor(cfg.activations);
    if (auto* x = std::get_if<MatF>(&t))
      return quantize(*x, cfg.bits_a, Scheme::symmetric, Granularity::per_token());
    QuantizedTensor q = read_quantized(cfg.activations);
    if (q.params.granularity.kind != GranKind::per_token)
      throw ParamError("quantized activations must be per-token");
    return q;
  }
  require_shape(cfg, /*need_m=*/true);
  const MatF x = generate_synthetic(cfg.m, k, Gaussian{1.0}, cfg.seed + 1);
  return quantize(x, cfg.bits_a, Scheme::symmetric, Granularity::per_token());
}

void deliver(const OrderedJson& results, const Config& cfg) {
  const ReportFormat format = format_from_string(cfg.format);
  if (cfg.out.empty())
    std::cout << emit_report(results, format);
  else
    write_report(results, format, cfg.out);
}

int cmd_quantize(const Config& cfg) {
  if (cfg.out.empty()) throw ParamError("quantize needs --out for the value file");
  MatF x;
  if (!cfg.input.empty()) {
    x = read_float_tensor(cfg.input);
  } else {
    require_shape(cfg, /*need_m=*/false);
    x = synth_weights(cfg.k, cfg.n, cfg.seed);
  }
  Granularity gran;
  gran.kind = gran_kind_from_string(cfg.granularity);
  gran.group_size = cfg.group;
  const int bits = gran.kind == GranKind::per_token ? cfg.bits_a : cfg.bits_w;
  const QuantizedTensor q = quantize(x, bits, scheme_from_string(cfg.scheme), gran);
  write_quantized(q, cfg.out);

  OrderedJson row;
  row["command"] = "quantize";
  row["rows"] = q.rows();
  row["cols"] = q.cols();
  row["bit_width"] = q.params.bit_width;
  row["scheme"] = to_string(q.params.scheme);
  row["granularity"] = to_string(q.params.granularity.kind);
  row["group"] = q.params.granularity.group_size;
  row["scale_count"] = q.params.scales.size();
  row["values_path"] = cfg.out;
  row["sidecar_path"] = cfg.out + ".json";
  const ReportFormat format = format_from_string(cfg.format);
  std::cout << emit_report(row, format);
  return 0;
}

struct PreparedWeights {
  QuantizedTensor wq;
  IntegerScaleSet set;    // integer_scale only
  DualInnerQuant inner;   // dual_quant only
  Index report_group = 0;
};

PreparedWeights prepare_weights(const Config& cfg, PathKind path, const MatF& wf) {
  PreparedWeights p;
  switch (path) {
    case PathKind::float_scale:
    case PathKind::integer_scale: {
      p.wq = quantize(wf, cfg.bits_w, Scheme::symmetric, Granularity::group_of(cfg.group));
      p.report_group = cfg.group;
      if (path == PathKind::integer_scale) {
        const auto fixed = parse_amplifier(cfg.amplifier);
        const std::int64_t amp = fixed ? *fixed : search_amplifier(p.wq.params.scales);
        p.set = integerize_scales(p.wq.params.scales, amp);
      }
      break;
    }
    case PathKind::coarse:
      p.wq = quantize(wf, cfg.bits_w, Scheme::symmetric, Granularity::per_channel());
      p.report_group = wf.rows();
      break;
    case PathKind::dual_quant:
      p.wq = quantize(wf, 8, Scheme::symmetric, Granularity::per_channel());
      p.inner = dual_inner_quantize(p.wq, cfg.group);
      p.report_group = cfg.group;
      break;
  }
  return p;
}

int cmd_gemm(const Config& cfg) {
  const std::vector<PathKind> paths = parse_paths(cfg.paths);
  MatF wf;
  if (!cfg.weights.empty()) {
    if (cfg.weights.size() > 1) throw ParamError("gemm takes a single weight matrix");
    wf = read_float_tensor(cfg.weights[0]);
  } else if (!cfg.input.empty()) {
    wf = read_float_tensor(cfg.input);
  } else {
    require_shape(cfg, /*need_m=*/cfg.activations.empty());
    wf = synth_weights(cfg.k, cfg.n, cfg.seed);
  }
  const QuantizedTensor xq = load_activations(cfg, wf.rows());

  GemmOptions opt;
  opt.overflow = cfg.overflow == "strict" ? OverflowMode::strict : OverflowMode::permissive;
  if (cfg.overflow != "strict" && cfg.overflow != "permissive")
    throw ParamError("--overflow must be strict or permissive");
  opt.workers = cfg.workers;
  if (cfg.fallback != "none" && cfg.fallback != "auto")
    throw ParamError("--fallback must be none or auto");
  const bool fallback_auto = cfg.fallback == "auto";

  OrderedJson rows = OrderedJson::array();
  for (const PathKind path : paths) {
    const PreparedWeights p = prepare_weights(cfg, path, wf);
    PathConfig pc;
    pc.kind = path;
    if (path == PathKind::integer_scale) pc.int_scales = &p.set;
    if (path == PathKind::dual_quant) pc.inner = &p.inner;
    const GemmResult res = run_layer(
        xq, p.wq, pc,
        fallback_auto ? FallbackPolicy::float_scale_on_overflow_risk : FallbackPolicy::none, opt);
    rows.push_back(gemm_report_row(
        path, xq.rows(), p.wq.cols(), xq.cols(), p.report_group, res.stats,
        fallback_auto ? std::optional<bool>(res.stats.fallback_applied) : std::nullopt));
  }
  deliver(rows.size() == 1 ? rows[0] : rows, cfg);
  return 0;
}

int cmd_search_amplifier(const Config& cfg) {
  const std::vector<MatF> mats = load_weight_list(cfg);
  if (mats.size() != 1) throw ParamError("search-amplifier takes a single weight matrix");
  const QuantizedTensor q =
      quantize(mats[0], cfg.bits_w, Scheme::symmetric, Granularity::group_of(cfg.group));
  const int exponent = search_amplifier_exponent(q.params.scales);

  OrderedJson row;
  row["amplifier"] = std::int64_t{1} << exponent;
  row["exponent"] = exponent;
  row["min_scale"] = q.params.scales.minCoeff();
  row["scale_count"] = q.params.scales.size();
  deliver(row, cfg);
  return 0;
}

int cmd_analyze(const Config& cfg) {
  const std::vector<MatF> mats = load_weight_list(cfg);
  const std::vector<std::int64_t> amps = parse_amplifier_list(cfg.amplifiers);
  const ScaleAnalysis analysis = analyze_scales(mats, cfg.bits_w, cfg.group, amps);
  const std::vector<AblationRow> ablation = run_ablation(mats, amps, cfg.group);

  const ReportFormat format = format_from_string(cfg.format);
  if (format == ReportFormat::json) {
    OrderedJson out = scale_analysis_json(analysis);
    out["ablation"] = ablation_report_rows(ablation);
    deliver(out, cfg);
  } else {
    deliver(ablation_report_rows(ablation), cfg);
  }
  return 0;
}

int cmd_overflow(const Config& cfg) {
  const std::vector<MatF> mats = load_weight_list(cfg);
  if (mats.size() != 1) throw ParamError("overflow takes a single weight matrix");
  const MatF& wf = mats[0];
  const QuantizedTensor wq =
      quantize(wf, cfg.bits_w, Scheme::symmetric, Granularity::group_of(cfg.group));
  const auto fixed = parse_amplifier(cfg.amplifier);
  const std::int64_t amp = fixed ? *fixed : search_amplifier(wq.params.scales);
  const IntegerScaleSet set = integerize_scales(wq.params.scales, amp);

  OverflowReport report =
      overflow_analyzer(wf.rows(), cfg.group, cfg.bits_a, cfg.bits_w, set);
  if (cfg.m >= 1 || !cfg.activations.empty()) {
    // Observed maxima ride along to mirror the static bound with reality.
    const QuantizedTensor xq = load_activations(cfg, wf.rows());
    GemmOptions opt;
    opt.workers = cfg.workers;
    const GemmResult res = gemm_integer_scale(xq, wq, set, opt);
    report.observed_max = res.stats.max_abs_accumulator;
  }
  deliver(overflow_report_json(report), cfg);
  return 0;
}

int cmd_bench(const Config& cfg) {
  require_shape(cfg, /*need_m=*/true);
  BenchShape shape;
  shape.m = cfg.m;
  shape.k = cfg.k;
  shape.n = cfg.n;
  shape.group = cfg.group;
  const std::vector<BenchRow> rows =
      run_bench(shape, parse_paths(cfg.paths), cfg.repeats, cfg.seed);
  deliver(bench_report_rows(rows), cfg);
  return 0;
}

int dispatch(const Config& cfg) {
  if (cfg.command == "quantize") return cmd_quantize(cfg);
  if (cfg.command == "gemm") return cmd_gemm(cfg);
  if (cfg.command == "search-amplifier") return cmd_search_amplifier(cfg);
  if (cfg.command == "analyze") return cmd_analyze(cfg);
  if (cfg.command == "overflow") return cmd_overflow(cfg);
  if (cfg.command == "bench") return cmd_bench(cfg);
  throw ParamError("unknown command '" + cfg.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  Config cfg;
  CLI::App app{
      "Fine-grained quantization laboratory: group-wise quantization, "
      "integer-scale GEMM paths, amplifier search and overflow analysis"};
  app.add_option("--command", cfg.command,
                 "quantize | gemm | search-amplifier | analyze | overflow | bench")
      ->required();
  app.add_option("--input", cfg.input, "input tensor file (QTNS)");
  app.add_option("--weights", cfg.weights, "weight tensor file(s) (QTNS)");
  app.add_option("--activations", cfg.activations, "activation tensor file (QTNS)");
  app.add_option("--m", cfg.m, "rows of the activation matrix");
  app.add_option("--k", cfg.k, "reduction dimension");
  app.add_option("--n", cfg.n, "weight output channels");
  app.add_option("--bits-w", cfg.bits_w, "weight bit width (4 or 8)");
  app.add_option("--bits-a", cfg.bits_a, "activation bit width");
  app.add_option("--scheme", cfg.scheme, "symmetric | asymmetric");
  app.add_option("--group", cfg.group, "group size along the reduction dimension");
  app.add_option("--granularity", cfg.granularity, "tensor | token | channel | group");
  app.add_option("--amplifier", cfg.amplifier, "power-of-two integer or 'heuristic'");
  app.add_option("--amplifiers", cfg.amplifiers, "comma-separated amplifier sweep list");
  app.add_option("--path", cfg.paths,
                 "comma-separated: float-scale | integer-scale | coarse | dual-quant");
  app.add_option("--overflow", cfg.overflow, "strict | permissive");
  app.add_option("--fallback", cfg.fallback, "none | auto");
  app.add_option("--seed", cfg.seed, "seed for synthetic inputs");
  app.add_option("--workers", cfg.workers, "worker threads for the GEMM engine");
  app.add_option("--repeats", cfg.repeats, "bench repeats (>= 3)");
  app.add_option("--out", cfg.out, "output file (default: stdout)");
  app.add_option("--format", cfg.format, "json | csv | text-table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return dispatch(cfg);
  } catch (const OverflowError& e) {
    std::cerr << "overflow: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
