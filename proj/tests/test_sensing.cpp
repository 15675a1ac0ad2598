#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "cava/recover.hpp"
#include "cava/image_io.hpp"
#include "cava/rng.hpp"
#include "cava/sensing.hpp"
#include "cava/wavelet.hpp"

using namespace cava;

namespace {

Vector random_vector(Index n, std::uint64_t seed) {
  Rng rng(seed);
  return Vector::NullaryExpr(n, [&rng](Index) { return rng.uniform() - 0.5; });
}

Image random_image(Index side, std::uint64_t seed) {
  Rng rng(seed);
  Image img(side, side);
  for (Index r = 0; r < side; ++r)
    for (Index c = 0; c < side; ++c) img(r, c) = rng.uniform();
  return img;
}

Matrix analysis_matrix_1d(Index n, const WaveletSpec& spec) {
  Matrix A = Matrix::Zero(n, n);
  for (Index k = 0; k < n / 2; ++k) {
    for (int t = 0; t < spec.filter_len(); ++t) {
      A(k, (2 * k + t) % n) += spec.lo[static_cast<std::size_t>(t)];
      A(n / 2 + k, (2 * k + t) % n) += spec.hi[static_cast<std::size_t>(t)];
    }
  }
  return A;
}

Vector oracle_fwt2(const Image& img, const WaveletSpec& spec, int levels) {
  const Index side = img.rows();
  const CoeffLayout lay = CoeffLayout::make(side, levels);
  Vector out(lay.total());
  auto pack = [&out](const Matrix& band, const CoeffLayout::Band& b) {
    Index p = b.offset;
    for (Index r = 0; r < b.band_side; ++r)
      for (Index c = 0; c < b.band_side; ++c) out[p++] = band(r, c);
  };
  Matrix cur = img;
  for (int lev = 1; lev <= levels; ++lev) {
    const Index s = cur.rows(), h = s / 2;
    const Matrix A = analysis_matrix_1d(s, spec);
    const Matrix z = A * cur * A.transpose();
    const auto& bands = lay.details[static_cast<std::size_t>(levels - lev)];
    pack(z.block(h, 0, h, h), bands.horiz);
    pack(z.block(0, h, h, h), bands.vert);
    pack(z.block(h, h, h, h), bands.diag);
    cur = z.topLeftCorner(h, h);
  }
  pack(cur, lay.approx);
  return out;
}

}  // namespace

TEST_CASE("operator generation: determinism, entry domain, Bernoulli mean") {
  const SensingOperator a(2, 3, 42), b(2, 3, 42);
  CHECK(a.dense() == b.dense());

  const SensingOperator tiny(1, 1, 12345);
  const double e = tiny.entry(0, 0);
  CHECK((e == 0.0 || e == 1.0));

  const SensingOperator big(100, 1000, 1);
  double ones = 0;
  for (Index i = 0; i < 100; ++i)
    for (Index j = 0; j < 1000; ++j) {
      const double v = big.entry(i, j);
      REQUIRE((v == 0.0 || v == 1.0));
      ones += v;
    }
  const double mean = ones / 100000.0;
  CHECK(mean > 0.45);
  CHECK(mean < 0.55);

  CHECK_THROWS_AS(SensingOperator(3, 2, 0), std::invalid_argument);
  CHECK_THROWS_AS(SensingOperator(0, 2, 0), std::invalid_argument);
}

TEST_CASE("apply and adjoint: hand matvec on the seed-54 operator") {
  // seed 54 yields exactly [[1,0,1],[0,1,1]] under the pinned word scheme
  const SensingOperator op(2, 3, 54);
  Matrix expect(2, 3);
  expect << 1, 0, 1, 0, 1, 1;
  REQUIRE(op.dense() == expect);

  Vector s(3);
  s << 1, 2, 3;
  const Vector y = op.apply(s);
  CHECK(y(0) == 4.0);
  CHECK(y(1) == 5.0);

  Vector r(2);
  r << 1, 1;
  const Vector x = op.apply_adjoint(r);
  CHECK(x(0) == 1.0);
  CHECK(x(1) == 1.0);
  CHECK(x(2) == 2.0);

  CHECK(op.apply(Vector::Zero(3)).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(op.apply_adjoint(Vector::Zero(2)).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK_THROWS_AS(op.apply(Vector::Zero(4)), std::invalid_argument);
  CHECK_THROWS_AS(op.apply_adjoint(Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("one-hot vectors extract operator columns") {
  const SensingOperator op(5, 20, 3);
  for (const Index j : {0, 7, 19}) {
    Vector e = Vector::Zero(20);
    e[j] = 1.0;
    const Vector y = op.apply(e);
    CHECK((y - op.column(j)).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("adjoint identity <Phi x, y> == <x, Phi^T y>") {
  const SensingOperator op(10, 50, 77);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_vector(50, 100 + static_cast<std::uint64_t>(trial));
    const Vector y = random_vector(10, 200 + static_cast<std::uint64_t>(trial));
    const double lhs = op.apply(x).dot(y);
    const double rhs = x.dot(op.apply_adjoint(y));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("dense and on-the-fly storage produce identical measurements") {
  const SensingOperator dense(37, 413, 9, SensingOperator::Storage::Dense);
  const SensingOperator otf(37, 413, 9, SensingOperator::Storage::OnTheFly);
  CHECK(dense.dense() == otf.dense());
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = random_vector(413, 300 + static_cast<std::uint64_t>(trial));
    const Vector r = random_vector(37, 400 + static_cast<std::uint64_t>(trial));
    CHECK(dense.apply(x) == otf.apply(x));                  // bitwise
    CHECK(dense.apply_adjoint(r) == otf.apply_adjoint(r));  // bitwise
  }
}

TEST_CASE("compression ratio: exact arithmetic and printed Table values") {
  CHECK(compression_ratio(500, 16384) == doctest::Approx(3.0517578125).epsilon(1e-15));
  CHECK(std::abs(compression_ratio(500, 16384) - 3.05) < 0.01);
  CHECK(std::abs(compression_ratio(800, 16384) - 4.89) < 0.01);
  CHECK(compression_ratio(0, 16384) == 0.0);
  CHECK(compression_ratio(16384, 16384) == 100.0);
  // monotone in m
  for (Index m = 1; m < 100; ++m) {
    CHECK(compression_ratio(m + 1, 16384) > compression_ratio(m, 16384));
  }
  CHECK_THROWS_AS(compression_ratio(1, 0), std::invalid_argument);
}

TEST_CASE("compress_image: linear, deterministic, matches the dense pipeline oracle") {
  const auto spec = WaveletSpec::daubechies(2);
  const int side = 32;
  const int level = max_level(side, spec.filter_len());
  const SensingOperator op(50, side * side, 1234);

  const CompressedSample zero = compress_image(Image::Zero(side, side), spec, level, op);
  CHECK(zero.y.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(zero.m() == 50);
  CHECK(zero.operator_seed == 1234);

  const Image img = random_image(side, 555);
  const CompressedSample s1 = compress_image(img, spec, level, op);
  const CompressedSample s2 = compress_image(img, spec, level, op);
  CHECK(s1.y == s2.y);  // bitwise determinism

  const Vector oracle = op.dense() * oracle_fwt2(img, spec, level);
  CHECK((s1.y - oracle).lpNorm<Eigen::Infinity>() < 1e-9);

  CHECK_THROWS_AS(compress_image(Image::Zero(16, 16), spec, 1, op), std::invalid_argument);
}

TEST_CASE("sample archive round trip and corruption errors") {
  SampleArchive archive;
  archive.m = 7;
  archive.n = 64;
  archive.operator_seed = 424242;
  for (int i = 0; i < 5; ++i) {
    CompressedSample s;
    s.y = random_vector(7, 900 + static_cast<std::uint64_t>(i));
    s.operator_seed = archive.operator_seed;
    if (i != 3) s.label = static_cast<Valence>(i % 3);
    archive.samples.push_back(std::move(s));
  }
  const auto path = std::filesystem::temp_directory_path() / "cava_archive_test.bin";
  write_sample_archive(path, archive);
  const SampleArchive back = read_sample_archive(path);
  CHECK(back.m == archive.m);
  CHECK(back.n == archive.n);
  CHECK(back.operator_seed == archive.operator_seed);
  REQUIRE(back.samples.size() == archive.samples.size());
  for (std::size_t i = 0; i < archive.samples.size(); ++i) {
    CHECK(back.samples[i].y == archive.samples[i].y);  // bitwise f64 round trip
    CHECK(back.samples[i].label == archive.samples[i].label);
  }

  auto bytes = read_file_bytes(path);
  bytes[0] = 'X';
  const auto bad = std::filesystem::temp_directory_path() / "cava_archive_bad.bin";
  write_file_atomic(bad, bytes.data(), bytes.size());
  CHECK_THROWS_WITH_AS(read_sample_archive(bad), doctest::Contains("magic"),
                       std::runtime_error);
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}
