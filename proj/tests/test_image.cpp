#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cava/image.hpp"
#include "cava/image_io.hpp"
#include "cava/rng.hpp"

using namespace cava;

namespace {

const std::filesystem::path kDataDir = CAVA_TEST_DATA_DIR;

std::vector<unsigned char> bytes_of(const std::string& s) {
  return {s.begin(), s.end()};
}

// self-contained CRC32 (reflected 0xEDB88320), independent of the library
std::uint32_t ref_crc32(const std::vector<unsigned char>& data) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (const unsigned char b : data) {
    crc ^= b;
    for (int i = 0; i < 8; ++i) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::uint32_t ref_adler32(const std::vector<unsigned char>& data) {
  std::uint32_t a = 1, b = 0;
  for (const unsigned char c : data) {
    a = (a + c) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void push_chunk(std::vector<unsigned char>& png, const char* type,
                const std::vector<unsigned char>& payload) {
  put_be32(png, static_cast<std::uint32_t>(payload.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  png.insert(png.end(), body.begin(), body.end());
  put_be32(png, ref_crc32(body));
}

// Minimal grayscale PNG with a raw (stored-block) zlib stream, so the test
// does not depend on any deflate implementation.
std::vector<unsigned char> make_png(std::uint32_t w, std::uint32_t h, int depth,
                                    int color_type, int interlace,
                                    const std::vector<unsigned char>& raw) {
  std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<unsigned char> ihdr;
  put_be32(ihdr, w);
  put_be32(ihdr, h);
  ihdr.push_back(static_cast<unsigned char>(depth));
  ihdr.push_back(static_cast<unsigned char>(color_type));
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(static_cast<unsigned char>(interlace));
  push_chunk(png, "IHDR", ihdr);

  std::vector<unsigned char> z = {0x78, 0x01, 0x01};  // zlib hdr + final stored block
  const auto len = static_cast<std::uint16_t>(raw.size());
  z.push_back(static_cast<unsigned char>(len & 0xFF));
  z.push_back(static_cast<unsigned char>(len >> 8));
  z.push_back(static_cast<unsigned char>(~len & 0xFF));
  z.push_back(static_cast<unsigned char>((~len >> 8) & 0xFF));
  z.insert(z.end(), raw.begin(), raw.end());
  put_be32(z, ref_adler32(raw));
  push_chunk(png, "IDAT", z);
  push_chunk(png, "IEND", {});
  return png;
}

std::filesystem::path temp_file(const std::string& name,
                                const std::vector<unsigned char>& bytes) {
  const auto path = std::filesystem::temp_directory_path() / name;
  write_file_atomic(path, bytes.data(), bytes.size());
  return path;
}

}  // namespace

TEST_CASE("PGM decoding: hand examples") {
  // 2x2, bytes {0,255,255,0} -> intensities {0,1,1,0}
  auto bytes = bytes_of("P5\n2 2\n255\n");
  bytes.insert(bytes.end(), {0, 255, 255, 0});
  const Image img = decode_pgm(bytes, "inline");
  CHECK(img.rows() == 2);
  CHECK(img.cols() == 2);
  CHECK(img(0, 0) == 0.0);
  CHECK(img(0, 1) == 1.0);
  CHECK(img(1, 0) == 1.0);
  CHECK(img(1, 1) == 0.0);

  // all-zero 128x128
  auto zeros = bytes_of("P5\n# a comment\n128 128\n255\n");
  zeros.resize(zeros.size() + 128 * 128, 0);
  const Image z = decode_pgm(zeros, "inline");
  CHECK(z.rows() == 128);
  CHECK(z.cols() == 128);
  CHECK(z.lpNorm<Eigen::Infinity>() == 0.0);

  // 16-bit sample is MSB-first
  auto wide = bytes_of("P5\n1 1\n65535\n");
  wide.insert(wide.end(), {0x01, 0x00});  // 256
  CHECK(decode_pgm(wide, "inline")(0, 0) == doctest::Approx(256.0 / 65535.0).epsilon(1e-15));
}

TEST_CASE("PGM decoding: malformed inputs name the property") {
  auto ascii = bytes_of("P2\n2 2\n255\n0 1 2 3\n");
  CHECK_THROWS_WITH_AS(decode_pgm(ascii, "f"), doctest::Contains("P5"), std::runtime_error);

  auto badmax = bytes_of("P5\n2 2\n128\n");
  badmax.resize(badmax.size() + 4, 0);
  CHECK_THROWS_WITH_AS(decode_pgm(badmax, "f"), doctest::Contains("maxval"), std::runtime_error);

  auto truncated = bytes_of("P5\n4 4\n255\n");
  truncated.resize(truncated.size() + 3, 7);
  CHECK_THROWS_WITH_AS(decode_pgm(truncated, "f"), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("PNG decoding: all five filter types against hand-computed pixels") {
  const std::vector<unsigned char> raw = {
      0, 10, 20, 30, 40,   // None
      1, 5,  5,  5,  5,    // Sub
      2, 1,  2,  3,  4,    // Up
      3, 8,  8,  8,  8,    // Average
      4, 7,  7,  7,  7,    // Paeth
  };
  const auto png = make_png(4, 5, 8, 0, 0, raw);
  const Image img = decode_png(png, "inline");
  const int expect[5][4] = {{10, 20, 30, 40},
                            {5, 10, 15, 20},
                            {6, 12, 18, 24},
                            {11, 19, 26, 33},
                            {18, 26, 33, 40}};
  REQUIRE(img.rows() == 5);
  REQUIRE(img.cols() == 4);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(img(r, c) == doctest::Approx(expect[r][c] / 255.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("PNG decoding: unsupported properties are named") {
  const std::vector<unsigned char> raw(5, 0);
  CHECK_THROWS_WITH_AS(decode_png(make_png(4, 1, 8, 2, 0, std::vector<unsigned char>(13, 0)), "f"),
                       doctest::Contains("color type"), std::runtime_error);
  CHECK_THROWS_WITH_AS(decode_png(make_png(4, 1, 4, 0, 0, raw), "f"),
                       doctest::Contains("bit depth"), std::runtime_error);
  CHECK_THROWS_WITH_AS(decode_png(make_png(4, 1, 8, 0, 1, raw), "f"),
                       doctest::Contains("interlac"), std::runtime_error);

  auto corrupt = make_png(4, 1, 8, 0, 0, raw);
  corrupt[20] ^= 0x01;  // flip a bit inside IHDR payload
  CHECK_THROWS_WITH_AS(decode_png(corrupt, "f"), doctest::Contains("CRC"), std::runtime_error);

  const auto junk = bytes_of("not an image at all");
  const auto path = temp_file("cava_junk.bin", junk);
  CHECK_THROWS_WITH_AS(load_image(path), doctest::Contains("unrecognized"), std::runtime_error);
}

TEST_CASE("reference decoder oracle: 8-bit PNG written by an external encoder") {
  const Image img = load_image(kDataDir / "ref_gray8.png");
  REQUIRE(img.rows() == 256);
  REQUIRE(img.cols() == 256);
  CHECK(img.minCoeff() >= 0.0);
  CHECK(img.maxCoeff() <= 1.0);
  double sum = 0.0;
  for (Index y = 0; y < 256; ++y) {
    for (Index x = 0; x < 256; ++x) {
      const double expect = static_cast<double>((3 * x + 7 * y + (x * y) / 16) % 256);
      CHECK(img(y, x) * 255.0 == doctest::Approx(expect).epsilon(1e-12));
      sum += img(y, x) * 255.0;
    }
  }
  CHECK(sum == doctest::Approx(8351488.0).epsilon(1e-12));  // frozen from the encoder
}

TEST_CASE("reference decoder oracle: 16-bit PNG and 16-bit PGM") {
  const Image png = load_image(kDataDir / "ref_gray16.png");
  REQUIRE(png.rows() == 64);
  double sum = 0.0;
  for (Index y = 0; y < 64; ++y) {
    for (Index x = 0; x < 64; ++x) {
      const double expect = static_cast<double>((517 * x + 991 * y + 13) % 65536);
      CHECK(png(y, x) * 65535.0 == doctest::Approx(expect).epsilon(1e-12));
      sum += png(y, x) * 65535.0;
    }
  }
  CHECK(sum == doctest::Approx(136032256.0).epsilon(1e-12));

  const Image pgm = load_image(kDataDir / "ref_gray16.pgm");
  REQUIRE(pgm.rows() == 32);
  sum = 0.0;
  for (Index y = 0; y < 32; ++y) {
    for (Index x = 0; x < 32; ++x) {
      const double expect = static_cast<double>((1201 * x + 331 * y + 7) % 65536);
      CHECK(pgm(y, x) * 65535.0 == doctest::Approx(expect).epsilon(1e-12));
      sum += pgm(y, x) * 65535.0;
    }
  }
  CHECK(sum == doctest::Approx(24323072.0).epsilon(1e-12));
}

TEST_CASE("write/read round trip preserves the 8-bit quantization") {
  Rng rng(99);
  Image img(37, 23);
  for (Index r = 0; r < img.rows(); ++r)
    for (Index c = 0; c < img.cols(); ++c) img(r, c) = rng.uniform();

  for (const char* ext : {"pgm", "png"}) {
    const auto path =
        std::filesystem::temp_directory_path() / (std::string("cava_rt.") + ext);
    if (std::string(ext) == "pgm") write_pgm(path, img);
    else write_png(path, img);
    const Image back = load_image(path);
    REQUIRE(back.rows() == img.rows());
    REQUIRE(back.cols() == img.cols());
    for (Index r = 0; r < img.rows(); ++r) {
      for (Index c = 0; c < img.cols(); ++c) {
        const double q = std::round(img(r, c) * 255.0) / 255.0;
        CHECK(back(r, c) == doctest::Approx(q).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("preprocess: identity, constants, and the bilinear oracle") {
  // exact identity when already side x side
  Rng rng(5);
  Image img(128, 128);
  for (Index r = 0; r < 128; ++r)
    for (Index c = 0; c < 128; ++c) img(r, c) = rng.uniform();
  const Image same = preprocess(img, 128);
  CHECK((same - img).lpNorm<Eigen::Infinity>() == 0.0);
  // idempotence
  CHECK((preprocess(same, 128) - same).lpNorm<Eigen::Infinity>() == 0.0);

  // bilinear preserves constants
  const Image flat = preprocess(Image::Constant(256, 256, 0.5), 128);
  CHECK(flat.rows() == 128);
  CHECK((flat.array() - 0.5).abs().maxCoeff() < 1e-15);

  // horizontal ramp downsampled by 2: direct per-pixel bilinear formula
  Image ramp(256, 256);
  for (Index r = 0; r < 256; ++r)
    for (Index c = 0; c < 256; ++c) ramp(r, c) = static_cast<double>(c) / 255.0;
  const Image small = preprocess(ramp, 128);
  for (Index j = 0; j < 128; ++j) {
    const double x = std::clamp((j + 0.5) * 2.0 - 0.5, 0.0, 255.0);
    const Index x0 = static_cast<Index>(std::floor(x));
    const Index x1 = std::min<Index>(x0 + 1, 255);
    const double fx = x - static_cast<double>(x0);
    const double expect = ((1.0 - fx) * static_cast<double>(x0) +
                           fx * static_cast<double>(x1)) / 255.0;
    CHECK(small(0, j) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(small(127, j) == doctest::Approx(expect).epsilon(1e-12));
  }

  // center crop of a rectangular image picks the middle square
  Image rect = Image::Zero(64, 128);
  rect.block(0, 32, 64, 64).setConstant(1.0);
  const Image cropped = preprocess(rect, 64);
  CHECK((cropped.array() - 1.0).abs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(preprocess(img, 100), std::invalid_argument);  // not a power of two
  CHECK_THROWS_AS(preprocess(Image::Zero(64, 64), 128), std::invalid_argument);
  CHECK(preprocess(Image::Constant(64, 64, 0.25), 128, true)(5, 5) ==
        doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("normalize_minmax and clip01") {
  Image img(1, 3);
  img << -1.0, 0.5, 3.0;
  const Image norm = normalize_minmax(img);
  CHECK(norm(0, 0) == 0.0);
  CHECK(norm(0, 2) == 1.0);
  CHECK(norm(0, 1) == doctest::Approx(1.5 / 4.0));
  CHECK(normalize_minmax(Image::Constant(2, 2, 0.7)).lpNorm<Eigen::Infinity>() == 0.0);
  const Image clipped = clip01(img);
  CHECK(clipped(0, 0) == 0.0);
  CHECK(clipped(0, 1) == 0.5);
  CHECK(clipped(0, 2) == 1.0);
}
