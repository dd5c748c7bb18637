// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "intscale/types.hpp"

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

namespace intscale {

/// On-disk element types of the QTNS container.
enum class DType : std::uint8_t {
  real32 = 0,         // IEEE-754 binary32, little-endian
  signed8 = 1,        // one int8 per element
  packed_signed4 = 2  // two 4-bit values per byte, even index in the low nibble
};

/// Fixed-layout header of a QTNS tensor file. All multi-byte fields are
/// little-endian regardless of host order.
///
///   offset 0  char[4]  magic "QTNS"
///   offset 4  u16      version (currently 1)
///   offset 6  u8       dtype
///   offset 7  u8       ndim (1 or 2)
///   offset 8  u64[ndim] dims
///   then      payload, row-major
struct TensorHeader {
  static constexpr char kMagic[4] = {'Q', 'T', 'N', 'S'};
  static constexpr std::uint16_t kVersion = 1;

  std::uint16_t version = kVersion;
  DType dtype = DType::real32;
  std::vector<std::uint64_t> dims;

  std::uint64_t element_count() const;
  std::size_t payload_bytes() const;
};

/// Integer payload as read from disk. Quantization parameters travel in
/// the JSON sidecar, not in the container (see quantize.hpp).
struct QuantizedPayload {
  int bit_width = 0;  // 8 for signed8, 4 for packed_signed4
  MatQ values;        // sign-extended
};

using TensorData = std::variant<MatF, QuantizedPayload>;

/// Reads any QTNS file. A 1-d tensor of length n comes back as a 1 x n matrix.
TensorData read_tensor(const std::filesystem::path& path);

/// Like read_tensor but requires dtype real32.
MatF read_float_tensor(const std::filesystem::path& path);

void write_tensor(const MatF& x, const std::filesystem::path& path);

/// Writes integer values with the given dtype. signed8 requires values in
/// [-128, 127]; packed_signed4 requires [-8, 7].
void write_tensor(const MatQ& values, DType dtype, const std::filesystem::path& path);

/// Nibble packing used by packed_signed4: element 2i in the low nibble of
/// byte i, element 2i+1 in the high nibble; a trailing odd element leaves
/// the high nibble zero. Exposed for tests and external tooling.
std::vector<std::uint8_t> pack_signed4(const MatQ& values);
MatQ unpack_signed4(const std::vector<std::uint8_t>& bytes, Index rows, Index cols);

/// Header encode/decode against an in-memory byte buffer. read_header
/// throws FormatError on bad magic, version, dtype or ndim.
std::vector<std::uint8_t> encode_header(const TensorHeader& h);
TensorHeader decode_header(const std::vector<std::uint8_t>& bytes, std::size_t& offset);

// Synthetic inputs. All generators are deterministic in (shape, params,
// seed) and produce identical streams on every platform; they do not use
// std::*_distribution on purpose.

struct Gaussian {
  double sigma = 1.0;
};

struct Uniform {
  double lo = -1.0;
  double hi = 1.0;
};

/// Weight-like matrix whose per-group ranges straddle roughly [2^-10, 2^-6],
/// the spread seen in decoder-block projection layers. Rows index the
/// reduction dimension, columns the output channels; rows must be a
/// multiple of 128 so that every size-128 group is fully populated.
struct LlamaLike {};

using Distribution = std::variant<Gaussian, Uniform, LlamaLike>;

MatF generate_synthetic(Index rows, Index cols, const Distribution& dist, std::uint64_t seed);

}  // namespace intscale
