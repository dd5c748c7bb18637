// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
//
// Acceptance gate: one line per criterion, nonzero exit when any fails.
// Tolerances are pinned next to each check; everything else is exact.

#include <intscale/analysis.hpp>
#include <intscale/gemm.hpp>
#include <intscale/integer_scale.hpp>
#include <intscale/quantize.hpp>
#include <intscale/tensor_io.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace intscale;
namespace fs = std::filesystem;

namespace {

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double u01() { return (eng() >> 11) * 0x1.0p-53; }
  std::int64_t below(std::int64_t n) { return static_cast<std::int64_t>(eng() % n); }
};

std::int64_t ulp_distance(float a, float b) {
  if (a == b) return 0;
  auto key = [](float x) {
    auto u = std::bit_cast<std::int32_t>(x);
    return std::int64_t{u < 0 ? std::numeric_limits<std::int32_t>::min() - std::int64_t{u} : u};
  };
  return std::abs(key(a) - key(b));
}

// Activation with integer codes in [-127, 127] and given per-token scales.
QuantizedTensor make_x(Rng& rng, Index m, Index k, const VecD& scales) {
  QuantizedTensor x;
  x.values.resize(m, k);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < k; ++j)
      x.values(i, j) = static_cast<std::int16_t>(rng.below(255) - 127);
  x.params.bit_width = 8;
  x.params.scheme = Scheme::symmetric;
  x.params.granularity = Granularity::per_token();
  x.params.scales = scales;
  return x;
}

QuantizedTensor make_w(Rng& rng, Index k, Index n, Index g, const VecD& scales) {
  QuantizedTensor w;
  w.values.resize(k, n);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < n; ++j)
      w.values(i, j) = static_cast<std::int16_t>(rng.below(16) - 8);
  w.params.bit_width = 4;
  w.params.scheme = Scheme::symmetric;
  w.params.granularity = Granularity::group_of(g);
  w.params.scales = scales;
  return w;
}

struct Criterion {
  int number;
  std::string name;
  std::function<bool(std::string&)> run;
};

// ---------------------------------------------------------------------------
// 1. Exact path agreement on dyadic scales.

bool criterion1(std::string& detail) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1001);
  const std::int64_t amp = 1024;
  std::int64_t checked = 0, violations = 0, max_ulp = 0;

  for (int trial = 0; trial < 1000; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.below(64));
    const Index n = 1 + static_cast<Index>(rng.below(64));
    const Index k = 4 * (1 + static_cast<Index>(rng.below(16)));
    const Index g_choices[] = {1, 2, 4, k};
    const Index g = g_choices[rng.below(4)];
    const Index units = (k / g) * n;

    // Dyadic group scales: s = j/1024 for integer j, so integerization is
    // the identity and the two paths compute the same real number.
    VecD ws(units);
    for (Index u = 0; u < units; ++u) ws[u] = double(1 + rng.below(4096)) / double(amp);
    VecD xs(m);
    for (Index i = 0; i < m; ++i) xs[i] = double(1 + rng.below(1024)) / 256.0;

    const QuantizedTensor x = make_x(rng, m, k, xs);
    const QuantizedTensor w = make_w(rng, k, n, g, ws);
    const IntegerScaleSet set = integerize_scales(ws, amp);

    const GemmResult rf = gemm_float_scale(x, w);
    const GemmResult ri = gemm_integer_scale(x, w, set);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        const std::int64_t d = ulp_distance(rf.output(i, j), ri.output(i, j));
        max_ulp = std::max(max_ulp, d);
        if (d > 1) ++violations;
        ++checked;
      }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream os;
  os << checked << " outputs over 1000 instances, max ulp distance " << max_ulp << ", "
     << violations << " past 1 ulp, " << secs << " s";
  detail = os.str();
  return violations == 0 && secs < 10.0;
}

// ---------------------------------------------------------------------------
// 2. Bounded path agreement under amplifier rounding.

bool criterion2(std::string& detail) {
  Rng rng(1002);
  const std::int64_t amp = 1024;
  std::int64_t checked = 0, violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();

  for (int trial = 0; trial < 1000; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.below(8));
    const Index n = 1 + static_cast<Index>(rng.below(8));
    const Index k = 4 * (1 + static_cast<Index>(rng.below(8)));
    const Index g_choices[] = {1, 2, 4, k};
    const Index g = g_choices[rng.below(4)];
    const Index groups = k / g;
    const Index units = groups * n;

    // Arbitrary positive scales with s*amp >= 0.5, so the floor at 1 is
    // plain rounding and |round(s*amp) - s*amp| <= 1/2 holds everywhere.
    VecD ws(units);
    for (Index u = 0; u < units; ++u)
      ws[u] = std::exp2(-11.0 + 13.0 * rng.u01()) * (1.0 + rng.u01());
    VecD xs(m);
    for (Index i = 0; i < m; ++i) xs[i] = std::exp2(-8.0 + 12.0 * rng.u01());

    const QuantizedTensor x = make_x(rng, m, k, xs);
    const QuantizedTensor w = make_w(rng, k, n, g, ws);
    const IntegerScaleSet set = integerize_scales(ws, amp);

    GemmOptions opt;
    opt.record_partials = true;
    const GemmResult rf = gemm_float_scale(x, w, opt);
    const GemmResult ri = gemm_integer_scale(x, w, set, opt);

    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        std::int64_t sum_abs = 0;
        for (Index gi = 0; gi < groups; ++gi)
          sum_abs += ri.abs_group_partials(i, j * groups + gi);
        const double bound = xs[i] * double(sum_abs) / (2.0 * double(amp));
        const double diff = std::abs(ri.output_f64(i, j) - rf.output_f64(i, j));
        // Pinned tolerance: 1e-9 relative slack on the bound covers the
        // two engines' own double-rounding (term counts << 2^30 eps).
        const double limit = bound * (1.0 + 1e-9) + 1e-300;
        if (diff > limit) ++violations;
        if (bound > 0.0) worst_margin = std::min(worst_margin, (bound - diff) / bound);
        // The float outputs are single roundings of the checked doubles.
        if (rf.output(i, j) != static_cast<float>(rf.output_f64(i, j))) ++violations;
        if (ri.output(i, j) != static_cast<float>(ri.output_f64(i, j))) ++violations;
        ++checked;
      }
  }
  std::ostringstream os;
  os << checked << " outputs, " << violations << " bound violations, smallest slack fraction "
     << worst_margin;
  detail = os.str();
  return violations == 0;
}

// ---------------------------------------------------------------------------
// 3. Conversion accounting at the decoder-layer kernel shape.

bool criterion3(std::string& detail) {
  const Index m = 1, k = 4096, n = 22016, g = 128;
  QuantizedTensor wq;
  {
    const MatF wf = generate_synthetic(k, n, LlamaLike{}, 42);
    wq = quantize(wf, 4, Scheme::symmetric, Granularity::group_of(g));
  }
  const MatF xf = generate_synthetic(m, k, Gaussian{1.0}, 43);
  const QuantizedTensor xq = quantize(xf, 8, Scheme::symmetric, Granularity::per_token());

  const GemmResult rf = gemm_float_scale(xq, wq);
  const IntegerScaleSet set = integerize_scales(wq.params.scales, 1024);
  const GemmResult ri = gemm_integer_scale(xq, wq, set);

  Index square_scales = 0;
  {
    const MatF sq = generate_synthetic(4096, 4096, LlamaLike{}, 44);
    square_scales = quantize(sq, 4, Scheme::symmetric, Granularity::group_of(128))
                        .params.scales.size();
  }

  std::ostringstream os;
  os << "float conversions " << rf.stats.int_to_float_conversions << " (want 704512), integer "
     << ri.stats.int_to_float_conversions << " (want 22016), 4096x4096 scale count "
     << square_scales << " (want 131072)";
  detail = os.str();
  return rf.stats.int_to_float_conversions == 704512 &&
         ri.stats.int_to_float_conversions == 22016 && square_scales == 131072;
}

// ---------------------------------------------------------------------------
// 4. Amplifier search equivalence with brute force.

bool criterion4(std::string& detail) {
  Rng rng(1004);
  std::int64_t mismatches = 0, clamp_sets = 0, window_sets = 0, window_wrong = 0;

  for (int trial = 0; trial < 10000; ++trial) {
    const Index sz = 1 + static_cast<Index>(rng.below(64));
    VecD s(sz);
    const bool clamp_case = trial % 4 == 0;
    for (Index i = 0; i < sz; ++i)
      s[i] = clamp_case ? 1.0 + 7.0 * rng.u01() : std::exp2(-12.0 + 15.0 * rng.u01());
    if (clamp_case) ++clamp_sets;

    int brute = 0;
    while (brute < 31 && s.minCoeff() * std::exp2(brute) < 1.0) ++brute;
    if (search_amplifier(s) != (std::int64_t{1} << brute)) ++mismatches;
    if (search_amplifier_exponent(s) != brute) ++mismatches;

    // Companion set with its minimum pinned inside [2^-10, 2^-9).
    VecD t(sz);
    t[0] = std::exp2(-10.0 + 0.999 * rng.u01());
    for (Index i = 1; i < sz; ++i) t[i] = t[0] * (1.0 + 15.0 * rng.u01());
    ++window_sets;
    if (search_amplifier(t) != 1024) ++window_wrong;
  }

  std::ostringstream os;
  os << "10000 sets (" << clamp_sets << " with min >= 1), " << mismatches
     << " brute-force mismatches; " << window_sets << " min-in-[2^-10,2^-9] sets, "
     << window_wrong << " not landing on 1024";
  detail = os.str();
  return mismatches == 0 && window_wrong == 0;
}

// ---------------------------------------------------------------------------
// 5. Amplifier ablation trend on llama-shaped weights.

bool criterion5(std::string& detail) {
  bool ok = true;
  std::ostringstream os;
  for (std::uint64_t seed : {7, 8, 9}) {
    const MatF w = generate_synthetic(512, 256, LlamaLike{}, seed);
    const auto rows = run_ablation({w}, {128, 512, 1024, 4096}, 128);
    // rows come back ascending: 128, 512, 1024, 4096
    const double m128 = rows[0].mse_vs_float, m512 = rows[1].mse_vs_float;
    const double m1024 = rows[2].mse_vs_float, m4096 = rows[3].mse_vs_float;
    const bool non_increasing = m512 >= m1024 && m1024 >= m4096;
    const bool strictly_worse_at_128 = m128 > m512;
    ok = ok && non_increasing && strictly_worse_at_128;
    os << "seed " << seed << ": mse(128)=" << m128 << " mse(512)=" << m512
       << " mse(1024)=" << m1024 << " mse(4096)=" << m4096 << "; ";
  }
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 6. Quantizer error bound and group-vs-channel scale dominance.

bool criterion6(std::string& detail) {
  Rng rng(1006);
  std::int64_t element_checks = 0, bound_violations = 0, scale_violations = 0;
  const Index rows = 128, cols = 2;
  const Index divisors[] = {1, 2, 4, 8, 16, 32, 64, 128};

  for (int trial = 0; trial < 10000; ++trial) {
    MatF x(rows, cols);
    const double mag = std::exp2(-12.0 + 18.0 * rng.u01());
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j)
        x(i, j) = static_cast<float>((2.0 * rng.u01() - 1.0) * mag);

    const Index g = divisors[rng.below(8)];
    const int bits = rng.below(2) == 0 ? 4 : 8;
    const Granularity grans[] = {Granularity::per_tensor(), Granularity::per_token(),
                                 Granularity::per_channel(), Granularity::group_of(g)};
    for (const Granularity& gran : grans) {
      const QuantizedTensor q = quantize(x, bits, Scheme::symmetric, gran);
      const MatF back = dequantize(q);
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) {
          const double s = q.params.scales[gran.unit_of(rows, i, j)];
          const double recon = double(q.values(i, j)) * s;
          // Exact check in double; the rounding theorem has no tolerance.
          if (std::abs(double(x(i, j)) - recon) > s / 2) ++bound_violations;
          if (back(i, j) != static_cast<float>(recon)) ++bound_violations;
          ++element_checks;
        }
    }

    // Every group scale is bounded by its enclosing channel scale.
    const QuantizedTensor qg = quantize(x, 4, Scheme::symmetric, Granularity::group_of(g));
    const QuantizedTensor qc = quantize(x, 4, Scheme::symmetric, Granularity::per_channel());
    const Index groups = rows / g;
    for (Index c = 0; c < cols; ++c)
      for (Index t = 0; t < groups; ++t)
        if (qg.params.scales[c * groups + t] > qc.params.scales[c]) ++scale_violations;
  }

  std::ostringstream os;
  os << element_checks << " element checks, " << bound_violations << " past s/2; "
     << scale_violations << " group scales above their channel scale";
  detail = os.str();
  return bound_violations == 0 && scale_violations == 0;
}

// ---------------------------------------------------------------------------
// 7. Oracle equivalence for all four paths.

bool criterion7(std::string& detail) {
  Rng rng(1007);
  std::int64_t outputs = 0, ulp_violations = 0, partial_mismatches = 0, degenerate_diffs = 0;

  for (int trial = 0; trial < 500; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.below(8));
    const Index n = 1 + static_cast<Index>(rng.below(8));
    const Index k = 4 * (1 + static_cast<Index>(rng.below(8)));
    const Index g_choices[] = {1, 2, 4, k};
    const Index g = g_choices[rng.below(4)];
    const Index groups = k / g;

    MatF xf(m, k), wf(k, n);
    const double mag = std::exp2(-8.0 + 8.0 * rng.u01());
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < k; ++j) xf(i, j) = static_cast<float>(4.0 * rng.u01() - 2.0);
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < n; ++j)
        wf(i, j) = static_cast<float>((2.0 * rng.u01() - 1.0) * mag);

    const QuantizedTensor x = quantize(xf, 8, Scheme::symmetric, Granularity::per_token());
    const QuantizedTensor w = quantize(wf, 4, Scheme::symmetric, Granularity::group_of(g));
    const QuantizedTensor wc = quantize(wf, 4, Scheme::symmetric, Granularity::per_channel());
    const QuantizedTensor w8 = quantize(wf, 8, Scheme::symmetric, Granularity::per_channel());
    const DualInnerQuant inner = dual_inner_quantize(w8, g);
    const IntegerScaleSet set =
        integerize_scales(w.params.scales, search_amplifier(w.params.scales));

    GemmOptions opt;
    opt.record_partials = true;

    const GemmResult rf = gemm_float_scale(x, w, opt);
    const GemmResult ri = gemm_integer_scale(x, w, set, opt);
    const GemmResult rc = gemm_coarse(x, wc);
    const GemmResult rd = gemm_dual_quant(x, w8, inner);

    PathConfig pf{PathKind::float_scale, nullptr, nullptr};
    PathConfig pi{PathKind::integer_scale, &set, nullptr};
    PathConfig pc{PathKind::coarse, nullptr, nullptr};
    PathConfig pd{PathKind::dual_quant, nullptr, &inner};
    const MatF of = gemm_oracle(x, w, pf);
    const MatF oi = gemm_oracle(x, w, pi);
    const MatF oc = gemm_oracle(x, wc, pc);
    const MatF od = gemm_oracle(x, w8, pd);

    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        if (ulp_distance(rf.output(i, j), of(i, j)) > 1) ++ulp_violations;
        if (ulp_distance(ri.output(i, j), oi(i, j)) > 1) ++ulp_violations;
        if (ulp_distance(rc.output(i, j), oc(i, j)) > 1) ++ulp_violations;
        if (ulp_distance(rd.output(i, j), od(i, j)) > 1) ++ulp_violations;
        outputs += 4;

        // Integer accumulators must be reproducible exactly.
        for (Index gi = 0; gi < groups; ++gi) {
          std::int64_t p = 0;
          for (Index kk = gi * g; kk < (gi + 1) * g; ++kk)
            p += std::int64_t{x.values(i, kk)} * std::int64_t{w.values(kk, j)};
          if (rf.abs_group_partials(i, j * groups + gi) != std::abs(p)) ++partial_mismatches;
          if (ri.abs_group_partials(i, j * groups + gi) != std::abs(p)) ++partial_mismatches;
        }
      }

    // Degenerate dual quantization (z = 0, s = 1) over codes that are
    // their own reconstruction equals the coarse path bit for bit.
    QuantizedTensor outer;
    outer.values.resize(k, n);
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < n; ++j)
        outer.values(i, j) = static_cast<std::int16_t>(rng.below(16));
    outer.params.bit_width = 8;
    outer.params.scheme = Scheme::symmetric;
    outer.params.granularity = Granularity::per_channel();
    outer.params.scales.resize(n);
    for (Index j = 0; j < n; ++j) outer.params.scales[j] = std::exp2(-6.0 + 6.0 * rng.u01());
    DualInnerQuant ident;
    ident.group_size = k;
    ident.values = outer.values;
    ident.scales = VecD::Ones(n);
    ident.zero_points = VecI::Zero(n);
    const GemmResult dd = gemm_dual_quant(x, outer, ident);
    const GemmResult cc = gemm_coarse(x, outer);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j)
        if (dd.output(i, j) != cc.output(i, j)) ++degenerate_diffs;
  }

  std::ostringstream os;
  os << outputs << " path outputs vs oracle, " << ulp_violations << " past 1 ulp, "
     << partial_mismatches << " partial mismatches, " << degenerate_diffs
     << " degenerate dual/coarse diffs";
  detail = os.str();
  return ulp_violations == 0 && partial_mismatches == 0 && degenerate_diffs == 0;
}

// ---------------------------------------------------------------------------
// 8. Overflow soundness: bound dominates, adversary trips every mode.

bool criterion8(std::string& detail) {
  Rng rng(1008);
  std::int64_t runs = 0, bound_violations = 0;

  for (int trial = 0; trial < 300; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.below(6));
    const Index n = 1 + static_cast<Index>(rng.below(6));
    const Index k = 4 * (1 + static_cast<Index>(rng.below(8)));
    const Index g_choices[] = {1, 2, 4, k};
    const Index g = g_choices[rng.below(4)];
    const Index units = (k / g) * n;

    VecD ws(units);
    for (Index u = 0; u < units; ++u)
      ws[u] = std::exp2(-11.0 + 13.0 * rng.u01()) * (1.0 + rng.u01());
    VecD xs(m);
    for (Index i = 0; i < m; ++i) xs[i] = std::exp2(-4.0 + 8.0 * rng.u01());
    const QuantizedTensor x = make_x(rng, m, k, xs);
    const QuantizedTensor w = make_w(rng, k, n, g, ws);
    const IntegerScaleSet set = integerize_scales(ws, 1024);

    IntegerScaleSet ones;
    ones.int_scales = VecI::Ones(units);
    ones.amplifier = 1;
    ones.exponent = 0;

    const GemmResult ri = gemm_integer_scale(x, w, set);
    if (ri.stats.max_abs_accumulator > overflow_analyzer(k, g, 8, 4, set).static_bound)
      ++bound_violations;
    const GemmResult rf = gemm_float_scale(x, w);
    if (rf.stats.max_abs_accumulator > overflow_analyzer(k, g, 8, 4, ones).static_bound)
      ++bound_violations;
    runs += 2;
  }

  // Adversarial construction: K = 4096 of code 127 against code -7
  // weights whose integer scales land on 1170.
  const MatF xf = MatF::Constant(1, 4096, 127.0f);
  const MatF wf = MatF::Constant(4096, 2, -8.0f);
  const QuantizedTensor x = quantize(xf, 8, Scheme::symmetric, Granularity::per_token());
  const QuantizedTensor w = quantize(wf, 4, Scheme::symmetric, Granularity::group_of(128));
  const IntegerScaleSet set = integerize_scales(w.params.scales, 1024);
  const OverflowReport report = overflow_analyzer(4096, 128, 8, 4, set);

  bool strict_threw = false;
  try {
    GemmOptions strict;
    strict.overflow = OverflowMode::strict;
    gemm_integer_scale(x, w, set, strict);
  } catch (const OverflowError&) {
    strict_threw = true;
  }

  const GemmResult perm = gemm_integer_scale(x, w, set);
  const bool flagged = perm.stats.overflow_detected;
  if (perm.stats.max_abs_accumulator > report.static_bound) ++bound_violations;
  runs += 1;

  PathConfig path{PathKind::integer_scale, &set, nullptr};
  const GemmResult fb =
      run_layer(x, w, path, FallbackPolicy::float_scale_on_overflow_risk);
  const GemmResult rf = gemm_float_scale(x, w);
  const bool fallback_ok = fb.stats.fallback_applied && fb.output == rf.output &&
                           !report.safe;

  std::ostringstream os;
  os << runs << " executed kernels, " << bound_violations
     << " observed>bound; adversary: strict throw " << (strict_threw ? "yes" : "no")
     << ", permissive flag " << (flagged ? "yes" : "no") << ", fallback substitution "
     << (fallback_ok ? "yes" : "no");
  detail = os.str();
  return bound_violations == 0 && strict_threw && flagged && fallback_ok;
}

// ---------------------------------------------------------------------------
// 9. Byte-identical non-timing reports across worker counts.

struct CliRunner {
  fs::path dir;
  CliRunner() {
    dir = fs::temp_directory_path() / ("intscale_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~CliRunner() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  // Returns stdout; empty string on nonzero exit.
  std::string run(const std::string& args) const {
    const std::string out = (dir / "out.txt").string();
    const std::string cmd =
        std::string(INTSCALE_CLI_PATH) + " " + args + " >" + out + " 2>/dev/null";
    const int raw = std::system(cmd.c_str());
    if (!WIFEXITED(raw) || WEXITSTATUS(raw) != 0) return std::string();
    std::ifstream in(out);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
};

bool criterion9(std::string& detail) {
  CliRunner cli;
  const std::string base =
      "--command gemm --m 8 --k 256 --n 16 --seed 21 "
      "--path float-scale,integer-scale,coarse,dual-quant";

  const std::string j1 = cli.run(base + " --workers 1");
  const std::string j2 = cli.run(base + " --workers 2");
  const std::string j8 = cli.run(base + " --workers 8");
  const std::string j1b = cli.run(base + " --workers 1");
  const std::string c1 = cli.run(base + " --workers 1 --format csv");
  const std::string c8 = cli.run(base + " --workers 8 --format csv");
  if (j1.empty() || j2.empty() || j8.empty() || j1b.empty() || c1.empty() || c8.empty()) {
    detail = "cli invocation failed";
    return false;
  }

  const std::string s1 = strip_timing(j1, ReportFormat::json);
  const bool json_ok = s1 == strip_timing(j2, ReportFormat::json) &&
                       s1 == strip_timing(j8, ReportFormat::json) &&
                       s1 == strip_timing(j1b, ReportFormat::json);
  const bool csv_ok =
      strip_timing(c1, ReportFormat::csv) == strip_timing(c8, ReportFormat::csv);

  std::ostringstream os;
  os << "json stripped bytes " << (json_ok ? "identical" : "DIFFER")
     << " across workers 1/2/8 and a repeat run; csv " << (csv_ok ? "identical" : "DIFFER");
  detail = os.str();
  return json_ok && csv_ok;
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {1, "exact path agreement on dyadic scales", criterion1},
      {2, "bounded path agreement via instrumented partials", criterion2},
      {3, "conversion accounting at the decoder kernel shape", criterion3},
      {4, "amplifier search equals brute force", criterion4},
      {5, "amplifier ablation trend", criterion5},
      {6, "quantizer error bound and scale dominance", criterion6},
      {7, "oracle equivalence of all paths", criterion7},
      {8, "overflow soundness and adversarial handling", criterion8},
      {9, "deterministic reports across worker counts", criterion9},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.number << ": " << c.name << " ("
              << detail << ")\n";
  }
  if (failures > 0) std::cout << failures << " criteria failed\n";
  return failures;
}
