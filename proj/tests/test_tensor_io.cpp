// Copyright 2026 the intscale authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.
#include <doctest.h>

#include <intscale/quantize.hpp>
#include <intscale/tensor_io.hpp>

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

using namespace intscale;
namespace fs = std::filesystem;

namespace {

// Per-test scratch directory, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("intscale_io_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<std::uint8_t> slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::string& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// 24-byte header for a 2-d tensor, little endian throughout.
std::vector<std::uint8_t> header_bytes(std::uint8_t dtype, std::uint64_t rows, std::uint64_t cols) {
  std::vector<std::uint8_t> h = {'Q', 'T', 'N', 'S', 1, 0, dtype, 2};
  for (int part = 0; part < 2; ++part) {
    std::uint64_t d = part == 0 ? rows : cols;
    for (int b = 0; b < 8; ++b) h.push_back(static_cast<std::uint8_t>((d >> (8 * b)) & 0xff));
  }
  return h;
}

MatQ rowq(std::initializer_list<int> vals) {
  MatQ m(1, static_cast<Index>(vals.size()));
  Index j = 0;
  for (int v : vals) m(0, j++) = static_cast<std::int16_t>(v);
  return m;
}

}  // namespace

TEST_CASE("nibble packing round trips and pins the reference byte") {
  // [-8, 7] packs to 0x78: low nibble first, -8 -> 0x8, 7 -> 0x7 shifted high.
  MatQ v = rowq({-8, 7});
  auto packed = pack_signed4(v);
  REQUIRE(packed.size() == 1);
  CHECK(packed[0] == 0x78);
  CHECK(unpack_signed4(packed, 1, 2) == v);

  // Odd element count leaves the top nibble of the last byte zero.
  CHECK(pack_signed4(rowq({3})) == std::vector<std::uint8_t>{0x03});
  CHECK(pack_signed4(rowq({-1})) == std::vector<std::uint8_t>{0x0f});
  CHECK(unpack_signed4({0x0f}, 1, 1) == rowq({-1}));

  // Full two-byte-per-pair example worked out by hand.
  MatQ v8 = rowq({-8, -1, 0, 1, 2, -2, 7, -7});
  CHECK(pack_signed4(v8) == std::vector<std::uint8_t>{0xf8, 0x10, 0xe2, 0x97});
  CHECK(unpack_signed4({0xf8, 0x10, 0xe2, 0x97}, 1, 8) == v8);

  CHECK_THROWS_AS(pack_signed4(rowq({8})), ValueError);
  CHECK_THROWS_AS(pack_signed4(rowq({-9})), ValueError);
  CHECK_THROWS_AS(unpack_signed4({0xf8}, 1, 3), LengthError);
}

TEST_CASE("float tensor files carry the pinned header layout") {
  TempDir tmp("hdr");
  MatF x(1, 1);
  x(0, 0) = 0.0f;
  write_tensor(x, tmp.file("z.qtns"));

  auto bytes = slurp(tmp.file("z.qtns"));
  std::vector<std::uint8_t> expect = header_bytes(0, 1, 1);
  expect.insert(expect.end(), {0, 0, 0, 0});  // 0.0f payload
  CHECK(bytes == expect);
}

TEST_CASE("float tensors round trip bit exactly") {
  TempDir tmp("roundtrip");
  MatF x(2, 3);
  x << 0.0f, -1.5f, 3.25e-3f, 1.0e30f, -1.0e-30f, 127.0f;
  write_tensor(x, tmp.file("x.qtns"));
  MatF back = read_float_tensor(tmp.file("x.qtns"));
  REQUIRE(back.rows() == 2);
  REQUIRE(back.cols() == 3);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(back(i, j) == x(i, j));
}

TEST_CASE("integer payloads round trip with sign preserved") {
  TempDir tmp("ints");
  MatQ q(2, 2);
  q << -128, 127, 0, -1;
  write_tensor(q, DType::signed8, tmp.file("q.qtns"));
  auto data = read_tensor(tmp.file("q.qtns"));
  auto* payload = std::get_if<QuantizedPayload>(&data);
  REQUIRE(payload != nullptr);
  CHECK(payload->bit_width == 8);
  CHECK(payload->values == q);

  MatQ q4 = rowq({-8, 7, -1});
  write_tensor(q4, DType::packed_signed4, tmp.file("q4.qtns"));
  auto data4 = read_tensor(tmp.file("q4.qtns"));
  auto* p4 = std::get_if<QuantizedPayload>(&data4);
  REQUIRE(p4 != nullptr);
  CHECK(p4->bit_width == 4);
  CHECK(p4->values == q4);
  // 24-byte header plus ceil(3/2) nibble bytes.
  CHECK(fs::file_size(tmp.file("q4.qtns")) == 26);
}

TEST_CASE("one dimensional files come back as a single row") {
  TempDir tmp("onedim");
  std::vector<std::uint8_t> bytes = {'Q', 'T', 'N', 'S', 1, 0, 1, 1, 5, 0, 0, 0, 0, 0, 0, 0};
  bytes.insert(bytes.end(), {0x80, 0xff, 0x00, 0x01, 0x7f});  // -128, -1, 0, 1, 127
  spit(tmp.file("v.qtns"), bytes);
  auto data = read_tensor(tmp.file("v.qtns"));
  auto* payload = std::get_if<QuantizedPayload>(&data);
  REQUIRE(payload != nullptr);
  REQUIRE(payload->values.rows() == 1);
  REQUIRE(payload->values.cols() == 5);
  CHECK(payload->values(0, 0) == -128);
  CHECK(payload->values(0, 1) == -1);
  CHECK(payload->values(0, 4) == 127);
}

TEST_CASE("malformed files raise the matching error type") {
  TempDir tmp("bad");

  auto good = header_bytes(0, 1, 1);
  good.insert(good.end(), {0, 0, 0, 0});

  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), FormatError);
  }
  SUBCASE("unsupported version") {
    auto b = good;
    b[4] = 2;
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), FormatError);
  }
  SUBCASE("unknown dtype") {
    auto b = good;
    b[6] = 3;
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), FormatError);
  }
  SUBCASE("bad rank") {
    auto b = good;
    b[7] = 3;
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), FormatError);
  }
  SUBCASE("zero dimension") {
    auto b = header_bytes(0, 0, 1);
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), FormatError);
  }
  SUBCASE("truncated payload") {
    auto b = good;
    b.pop_back();
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), LengthError);
  }
  SUBCASE("truncated header") {
    // A header too short to parse is a malformed header, not a short payload.
    auto b = std::vector<std::uint8_t>(good.begin(), good.begin() + 10);
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), LengthError);
  }
  SUBCASE("NaN payload") {
    auto b = header_bytes(0, 1, 1);
    b.insert(b.end(), {0x00, 0x00, 0xc0, 0x7f});  // quiet NaN
    spit(tmp.file("bad.qtns"), b);
    CHECK_THROWS_AS(read_tensor(tmp.file("bad.qtns")), ValueError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_tensor(tmp.file("absent.qtns")), IoError); }
}

TEST_CASE("writers reject values the format cannot hold") {
  TempDir tmp("wbad");
  MatF x(1, 1);
  x(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(write_tensor(x, tmp.file("nan.qtns")), ValueError);

  MatQ q(1, 1);
  q(0, 0) = 200;
  CHECK_THROWS_AS(write_tensor(q, DType::signed8, tmp.file("big.qtns")), ValueError);
  q(0, 0) = 8;
  CHECK_THROWS_AS(write_tensor(q, DType::packed_signed4, tmp.file("big4.qtns")), ValueError);
  q(0, 0) = 1;
  CHECK_THROWS_AS(write_tensor(q, DType::real32, tmp.file("real.qtns")), ParamError);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  MatF a = generate_synthetic(16, 16, Gaussian{1.0}, 42);
  MatF b = generate_synthetic(16, 16, Gaussian{1.0}, 42);
  MatF c = generate_synthetic(16, 16, Gaussian{1.0}, 43);
  CHECK(a == b);
  CHECK(a != c);

  MatF u = generate_synthetic(8, 8, Uniform{-2.0, 3.0}, 7);
  CHECK(u == generate_synthetic(8, 8, Uniform{-2.0, 3.0}, 7));
  CHECK((u.array() >= -2.0f).all());
  CHECK((u.array() < 3.0f).all());

  MatF l = generate_synthetic(256, 8, LlamaLike{}, 11);
  CHECK(l == generate_synthetic(256, 8, LlamaLike{}, 11));
}

TEST_CASE("degenerate uniform bounds produce a constant tensor") {
  MatF z = generate_synthetic(4, 4, Uniform{0.0, 0.0}, 1);
  CHECK((z.array() == 0.0f).all());
  MatF t = generate_synthetic(4, 4, Uniform{2.5, 2.5}, 1);
  CHECK((t.array() == 2.5f).all());
}

TEST_CASE("synthetic parameter validation") {
  CHECK_THROWS_AS(generate_synthetic(0, 4, Gaussian{1.0}, 0), ParamError);
  CHECK_THROWS_AS(generate_synthetic(4, 0, Gaussian{1.0}, 0), ParamError);
  CHECK_THROWS_AS(generate_synthetic(4, 4, Gaussian{0.0}, 0), ParamError);
  CHECK_THROWS_AS(generate_synthetic(4, 4, Gaussian{-1.0}, 0), ParamError);
  CHECK_THROWS_AS(generate_synthetic(4, 4, Uniform{1.0, 0.0}, 0), ParamError);
  CHECK_THROWS_AS(generate_synthetic(100, 4, LlamaLike{}, 0), ParamError);  // rows not a multiple of 128
}

TEST_CASE("llama-like tensors pin the minimum group scale window") {
  // The outlier construction keeps 4-bit group scales inside (2^-10, 2^-9)
  // at the low end, which is what steers the amplifier search to 1024.
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    MatF w = generate_synthetic(256, 16, LlamaLike{}, seed);
    auto q = quantize(w, 4, Scheme::symmetric, Granularity::group_of(128));
    double mn = q.params.scales.minCoeff();
    double mx = q.params.scales.maxCoeff();
    CHECK(mn > 0x1.0p-10);
    CHECK(mn < 0x1.0p-9);
    CHECK(mx <= 0x1.0p-6 * (1.0 + 1e-6));
  }
}
