// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#include "intscale/quantize.hpp"

#include "intscale/tensor_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace intscale {
namespace {

std::int64_t clamp64(std::int64_t v, std::int64_t lo, std::int64_t hi) {
  return std::min(std::max(v, lo), hi);
}

void require_bit_width(int n) {
  if (n != 4 && n != 8) throw ParamError("bit width must be 4 or 8, got " + std::to_string(n));
}

}  // namespace

void Granularity::validate(Index rows, Index cols) const {
  if (rows < 1 || cols < 1) throw ParamError("shape must be at least 1x1");
  if (kind == GranKind::group) {
    if (group_size < 1) throw ParamError("group size must be >= 1");
    if (rows % group_size != 0)
      throw ParamError("group size " + std::to_string(group_size) +
                       " does not divide the reduction dimension " + std::to_string(rows));
  }
}

Index Granularity::unit_count(Index rows, Index cols) const {
  switch (kind) {
    case GranKind::per_tensor: return 1;
    case GranKind::per_token: return rows;
    case GranKind::per_channel: return cols;
    case GranKind::group: return cols * (rows / group_size);
  }
  throw ParamError("unknown granularity");
}

Index Granularity::unit_of(Index rows, Index r, Index c) const {
  switch (kind) {
    case GranKind::per_tensor: return 0;
    case GranKind::per_token: return r;
    case GranKind::per_channel: return c;
    case GranKind::group: return c * (rows / group_size) + r / group_size;
  }
  throw ParamError("unknown granularity");
}

std::string to_string(Scheme s) {
  return s == Scheme::symmetric ? "symmetric" : "asymmetric";
}

std::string to_string(GranKind k) {
  switch (k) {
    case GranKind::per_tensor: return "per_tensor";
    case GranKind::per_token: return "per_token";
    case GranKind::per_channel: return "per_channel";
    case GranKind::group: return "group";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "symmetric") return Scheme::symmetric;
  if (s == "asymmetric") return Scheme::asymmetric;
  throw ParamError("unknown scheme '" + s + "'");
}

GranKind gran_kind_from_string(const std::string& s) {
  if (s == "per_tensor" || s == "tensor") return GranKind::per_tensor;
  if (s == "per_token" || s == "token") return GranKind::per_token;
  if (s == "per_channel" || s == "channel") return GranKind::per_channel;
  if (s == "group") return GranKind::group;
  throw ParamError("unknown granularity '" + s + "'");
}

std::int64_t QuantParams::qmin() const {
  return scheme == Scheme::symmetric ? -(std::int64_t{1} << (bit_width - 1)) : 0;
}

std::int64_t QuantParams::qmax() const {
  return scheme == Scheme::symmetric ? (std::int64_t{1} << (bit_width - 1)) - 1
                                     : (std::int64_t{1} << bit_width) - 1;
}

QuantizedTensor quantize(const MatF& x, int bit_width, Scheme scheme, const Granularity& g) {
  require_bit_width(bit_width);
  g.validate(x.rows(), x.cols());
  if (!x.allFinite()) throw ValueError("input has non-finite values");

  const Index rows = x.rows(), cols = x.cols();
  const Index units = g.unit_count(rows, cols);

  QuantizedTensor q;
  q.params.bit_width = bit_width;
  q.params.scheme = scheme;
  q.params.granularity = g;
  q.params.scales.resize(units);
  if (scheme == Scheme::asymmetric) q.params.zero_points.resize(units);

  VecD unit_min = VecD::Constant(units, std::numeric_limits<double>::infinity());
  VecD unit_max = VecD::Constant(units, -std::numeric_limits<double>::infinity());
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index u = g.unit_of(rows, r, c);
      const double v = x(r, c);
      unit_min[u] = std::min(unit_min[u], v);
      unit_max[u] = std::max(unit_max[u], v);
    }
  }

  const std::int64_t lo = q.params.qmin(), hi = q.params.qmax();
  for (Index u = 0; u < units; ++u) {
    if (scheme == Scheme::symmetric) {
      const double amax = std::max(std::abs(unit_min[u]), std::abs(unit_max[u]));
      // Scales live in double so that requantizing a reconstruction lands
      // on the same grid: q*s divides back to exactly q.
      q.params.scales[u] = amax == 0.0 ? 1.0 : amax / static_cast<double>(hi);
    } else {
      const double range = unit_max[u] - unit_min[u];
      const double s = range == 0.0 ? 1.0 : range / static_cast<double>(hi);
      q.params.scales[u] = s;
      q.params.zero_points[u] =
          static_cast<std::int32_t>(clamp64(std::llround(-unit_min[u] / s), 0, hi));
    }
  }

  q.values.resize(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index u = g.unit_of(rows, r, c);
      std::int64_t level = std::llround(static_cast<double>(x(r, c)) / q.params.scales[u]);
      if (scheme == Scheme::asymmetric) level += q.params.zero_points[u];
      q.values(r, c) = static_cast<std::int16_t>(clamp64(level, lo, hi));
    }
  }
  return q;
}

MatF dequantize(const QuantizedTensor& q) {
  const Index rows = q.rows(), cols = q.cols();
  const Granularity& g = q.params.granularity;
  const bool asym = q.params.scheme == Scheme::asymmetric;
  MatF x(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index u = g.unit_of(rows, r, c);
      const double level = asym ? q.values(r, c) - static_cast<double>(q.params.zero_points[u])
                                : static_cast<double>(q.values(r, c));
      x(r, c) = static_cast<float>(level * q.params.scales[u]);
    }
  }
  return x;
}

double reconstruction_mse(const MatF& a, const MatF& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("shape mismatch: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  double acc = 0.0;
  for (Index r = 0; r < a.rows(); ++r)
    for (Index c = 0; c < a.cols(); ++c) {
      const double d = static_cast<double>(a(r, c)) - static_cast<double>(b(r, c));
      acc += d * d;
    }
  return acc / static_cast<double>(a.size());
}

namespace {

// Unsigned 4/8-bit codes reuse the signed container types byte-for-byte:
// the stored value is the code's two's-complement reinterpretation, undone
// on read when the sidecar says asymmetric.
std::int16_t fold_unsigned(std::int64_t v, int bit_width) {
  const std::int64_t half = std::int64_t{1} << (bit_width - 1);
  return static_cast<std::int16_t>(v >= half ? v - 2 * half : v);
}

std::int16_t unfold_unsigned(std::int64_t v, int bit_width) {
  const std::int64_t full = std::int64_t{1} << bit_width;
  return static_cast<std::int16_t>(v < 0 ? v + full : v);
}

}  // namespace

void write_quantized(const QuantizedTensor& q, const std::filesystem::path& values_path) {
  const bool asym = q.params.scheme == Scheme::asymmetric;
  MatQ stored = q.values;
  if (asym)
    for (Index i = 0; i < stored.size(); ++i) {
      auto& v = stored(i / stored.cols(), i % stored.cols());
      v = fold_unsigned(v, q.params.bit_width);
    }
  write_tensor(stored, q.params.bit_width == 4 ? DType::packed_signed4 : DType::signed8,
               values_path);

  nlohmann::ordered_json side;
  side["bit_width"] = q.params.bit_width;
  side["scheme"] = to_string(q.params.scheme);
  side["granularity"] = {{"kind", to_string(q.params.granularity.kind)},
                         {"group_size", q.params.granularity.group_size}};
  side["scales"] = std::vector<double>(q.params.scales.begin(), q.params.scales.end());
  side["zero_points"] =
      std::vector<std::int32_t>(q.params.zero_points.begin(), q.params.zero_points.end());

  std::filesystem::path side_path = values_path;
  side_path += ".json";
  std::ofstream f(side_path);
  if (!f) throw IoError("cannot open " + side_path.string() + " for writing");
  f << side.dump(2) << "\n";
  if (!f) throw IoError("write failed on " + side_path.string());
}

QuantizedTensor read_quantized(const std::filesystem::path& values_path) {
  TensorData data = read_tensor(values_path);
  auto* payload = std::get_if<QuantizedPayload>(&data);
  if (!payload) throw FormatError(values_path.string() + " holds real values, expected codes");

  std::filesystem::path side_path = values_path;
  side_path += ".json";
  std::ifstream f(side_path);
  if (!f) throw IoError("cannot open sidecar " + side_path.string());
  nlohmann::json side;
  try {
    f >> side;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad sidecar " + side_path.string() + ": " + e.what());
  }

  QuantizedTensor q;
  try {
    q.params.bit_width = side.at("bit_width").get<int>();
    q.params.scheme = scheme_from_string(side.at("scheme").get<std::string>());
    const auto& gran = side.at("granularity");
    q.params.granularity.kind = gran_kind_from_string(gran.at("kind").get<std::string>());
    q.params.granularity.group_size = gran.at("group_size").get<Index>();
    const auto scales = side.at("scales").get<std::vector<double>>();
    q.params.scales = Eigen::Map<const VecD>(scales.data(), static_cast<Index>(scales.size()));
    const auto zps = side.at("zero_points").get<std::vector<std::int32_t>>();
    q.params.zero_points = Eigen::Map<const VecI>(zps.data(), static_cast<Index>(zps.size()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad sidecar " + side_path.string() + ": " + e.what());
  }
  require_bit_width(q.params.bit_width);
  if (q.params.bit_width != payload->bit_width)
    throw FormatError("sidecar bit width disagrees with container dtype");

  q.values = std::move(payload->values);
  if (q.params.scheme == Scheme::asymmetric)
    for (Index i = 0; i < q.values.size(); ++i) {
      auto& v = q.values(i / q.values.cols(), i % q.values.cols());
      v = unfold_unsigned(v, q.params.bit_width);
    }

  q.params.granularity.validate(q.rows(), q.cols());
  if (q.params.scales.size() != q.params.granularity.unit_count(q.rows(), q.cols()))
    throw FormatError("sidecar scale count does not match shape");
  if (q.params.scheme == Scheme::asymmetric &&
      q.params.zero_points.size() != q.params.scales.size())
    throw FormatError("sidecar zero point count does not match scale count");
  return q;
}

}  // namespace intscale
