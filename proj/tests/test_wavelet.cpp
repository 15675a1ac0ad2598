#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cava/rng.hpp"
#include "cava/wavelet.hpp"

using namespace cava;

namespace {

Image random_image(Index side, std::uint64_t seed) {
  Rng rng(seed);
  Image img(side, side);
  for (Index r = 0; r < side; ++r)
    for (Index c = 0; c < side; ++c) img(r, c) = rng.uniform();
  return img;
}

// Dense periodized 1D analysis operator: first n/2 rows are double-shifted
// low-pass taps, last n/2 rows the high-pass taps (circular, aliased with +=).
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

// Brute-force multi-level 2D analysis by explicit matrix products
// Z = A X A^T per level, recursing on the LL quadrant; packs with the
// documented layout (approx, then per level horiz/vert/diag row-major).
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
    const Index s = cur.rows();
    const Index h = s / 2;
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

// Brute-force synthesis: transpose of the analysis products.
Image oracle_ifwt2(const Vector& coeffs, Index side, int levels, const WaveletSpec& spec) {
  const CoeffLayout lay = CoeffLayout::make(side, levels);
  auto unpack = [&coeffs](const CoeffLayout::Band& b) {
    Matrix band(b.band_side, b.band_side);
    Index p = b.offset;
    for (Index r = 0; r < b.band_side; ++r)
      for (Index c = 0; c < b.band_side; ++c) band(r, c) = coeffs[p++];
    return band;
  };
  Matrix cur = unpack(lay.approx);
  for (int lev = levels; lev >= 1; --lev) {
    const Index h = lay.side >> lev;
    const Index s = 2 * h;
    const auto& bands = lay.details[static_cast<std::size_t>(levels - lev)];
    Matrix z(s, s);
    z.topLeftCorner(h, h) = cur;
    z.block(h, 0, h, h) = unpack(bands.horiz);
    z.block(0, h, h, h) = unpack(bands.vert);
    z.block(h, h, h, h) = unpack(bands.diag);
    const Matrix A = analysis_matrix_1d(s, spec);
    cur = A.transpose() * z * A;
  }
  return cur;
}

}  // namespace

TEST_CASE("daubechies filters satisfy the orthonormal identities") {
  for (int order = 1; order <= 10; ++order) {
    CAPTURE(order);
    const auto w = WaveletSpec::daubechies(order);
    REQUIRE(w.filter_len() == 2 * order);

    double sum = 0.0, sumsq = 0.0, hisum = 0.0;
    for (int t = 0; t < w.filter_len(); ++t) {
      sum += w.lo[static_cast<std::size_t>(t)];
      sumsq += w.lo[static_cast<std::size_t>(t)] * w.lo[static_cast<std::size_t>(t)];
      hisum += w.hi[static_cast<std::size_t>(t)];
    }
    CHECK(sum == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
    CHECK(sumsq == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(hisum) < 1e-12);

    for (int k = 1; k < order; ++k) {
      double corr = 0.0;
      for (int t = 0; t + 2 * k < w.filter_len(); ++t) {
        corr += w.lo[static_cast<std::size_t>(t)] * w.lo[static_cast<std::size_t>(t + 2 * k)];
      }
      CHECK(std::abs(corr) < 1e-13);
    }
    // quadrature mirror
    for (int t = 0; t < w.filter_len(); ++t) {
      const double expect = (t % 2 == 0 ? 1.0 : -1.0) *
                            w.lo[static_cast<std::size_t>(w.filter_len() - 1 - t)];
      CHECK(w.hi[static_cast<std::size_t>(t)] == expect);
    }
  }

  // closed forms: Haar and db2
  const auto db1 = WaveletSpec::daubechies(1);
  CHECK(db1.lo[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  const auto db2 = WaveletSpec::daubechies(2);
  const double s3 = std::sqrt(3.0), s2 = std::sqrt(2.0);
  CHECK(db2.lo[0] == doctest::Approx((1 + s3) / (4 * s2)).epsilon(1e-14));
  CHECK(db2.lo[3] == doctest::Approx((1 - s3) / (4 * s2)).epsilon(1e-14));

  CHECK_THROWS_AS(WaveletSpec::daubechies(0), std::invalid_argument);
  CHECK_THROWS_AS(WaveletSpec::daubechies(11), std::invalid_argument);
}

TEST_CASE("max_level matches floor(log2(side/(filter_len-1)))") {
  CHECK(max_level(128, 4) == 5);
  CHECK(max_level(128, 2) == 7);
  CHECK(max_level(64, 20) == 1);
  CHECK(max_level(8, 4) == 1);
  CHECK_THROWS_AS(max_level(8, 20), std::invalid_argument);
}

TEST_CASE("coefficient layout partitions [0, side^2) exactly") {
  for (const auto& [side, levels] : std::vector<std::pair<Index, int>>{
           {8, 1}, {8, 3}, {64, 2}, {128, 5}, {128, 7}}) {
    const auto lay = CoeffLayout::make(side, levels);
    std::vector<int> hits(static_cast<std::size_t>(side * side), 0);
    auto mark = [&hits](const CoeffLayout::Band& b) {
      for (Index i = 0; i < b.count(); ++i) ++hits[static_cast<std::size_t>(b.offset + i)];
    };
    mark(lay.approx);
    for (const auto& d : lay.details) {
      mark(d.horiz);
      mark(d.vert);
      mark(d.diag);
    }
    for (const int h : hits) CHECK(h == 1);
  }
}

TEST_CASE("constant and zero images transform as expected") {
  const auto db2 = WaveletSpec::daubechies(2);
  const double c = 0.37;
  for (int levels = 1; levels <= 5; ++levels) {
    const Image img = Image::Constant(128, 128, c);
    const auto coeffs = fwt2(img, db2, levels);
    const auto lay = coeffs.layout();
    const double expect = c * std::pow(2.0, levels);
    for (Index i = 0; i < lay.approx.count(); ++i) {
      CHECK(coeffs.values[lay.approx.offset + i] == doctest::Approx(expect).epsilon(1e-12));
    }
    for (Index i = lay.approx.count(); i < lay.total(); ++i) {
      CHECK(std::abs(coeffs.values[i]) < 1e-12);
    }
  }
  const auto zero = fwt2(Image::Zero(64, 64), db2, 3);
  CHECK(zero.values.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(ifwt2(zero, db2).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("fwt2 matches the dense analysis-matrix oracle") {
  struct Case {
    Index side;
    int order;
    int levels;
  };
  for (const Case& tc : {Case{8, 2, 1}, Case{8, 1, 3}, Case{32, 3, 2}, Case{64, 10, 1}}) {
    CAPTURE(tc.side);
    CAPTURE(tc.order);
    const auto spec = WaveletSpec::daubechies(tc.order);
    const Image img = random_image(tc.side, 1000 + static_cast<std::uint64_t>(tc.order));
    const auto got = fwt2(img, spec, tc.levels);
    const Vector want = oracle_fwt2(img, spec, tc.levels);
    CHECK((got.values - want).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("single coarsest coefficient synthesizes the periodized scaling atom") {
  for (const auto& [side, order, levels] :
       std::vector<std::tuple<Index, int, int>>{{8, 2, 1}, {16, 1, 2}, {16, 2, 2}}) {
    const auto spec = WaveletSpec::daubechies(order);
    const auto lay = CoeffLayout::make(side, levels);
    CoeffVector c;
    c.side = side;
    c.levels = levels;
    c.values = Vector::Zero(lay.total());
    c.values[lay.approx.offset + 1] = 1.0;  // second atom: exercises the shift
    const Image got = ifwt2(c, spec);
    const Image want = oracle_ifwt2(c.values, side, levels, spec);
    CHECK((got - want).lpNorm<Eigen::Infinity>() < 1e-10);
    // synthesis of a unit coefficient has unit energy (orthonormal atom)
    CHECK(got.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("round trip, Parseval, linearity and adjoint identity") {
  Rng rng(42);
  for (const int order : {1, 2, 10}) {
    const auto spec = WaveletSpec::daubechies(order);
    const int lmax = max_level(128, spec.filter_len());
    for (int levels = 1; levels <= lmax; ++levels) {
      const Image x = random_image(128, rng.next_u64());
      const Image y = random_image(128, rng.next_u64());

      const auto cx = fwt2(x, spec, levels);
      CHECK((ifwt2(cx, spec) - x).lpNorm<Eigen::Infinity>() < 1e-9);
      CHECK(std::abs(cx.values.norm() - x.norm()) < 1e-8 * x.norm());

      // linearity
      const double a = 1.7, b = -0.4;
      const Image mix = a * x + b * y;
      const auto cmix = fwt2(mix, spec, levels);
      const Vector lin = a * cx.values + b * fwt2(y, spec, levels).values;
      CHECK((cmix.values - lin).lpNorm<Eigen::Infinity>() < 1e-10 * lin.norm());

      // adjoint: <fwt2(x), c> == <x, ifwt2(c)>
      CoeffVector c;
      c.side = 128;
      c.levels = levels;
      c.values = Vector::NullaryExpr(128 * 128, [&rng](Index) { return rng.uniform() - 0.5; });
      const double lhs = cx.values.dot(c.values);
      const double rhs = (x.array() * ifwt2(c, spec).array()).sum();
      CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("smooth images have sparse coefficients at depth >= 3") {
  // smooth bump mixture, the regime the acquisition step relies on
  const Index side = 64;
  Image img(side, side);
  for (Index r = 0; r < side; ++r) {
    for (Index c = 0; c < side; ++c) {
      const double v = (r + 0.5) / side, u = (c + 0.5) / side;
      img(r, c) = 0.3 + 0.5 * std::exp(-((v - 0.4) * (v - 0.4) + (u - 0.6) * (u - 0.6)) / 0.02) +
                  0.3 * std::exp(-((v - 0.7) * (v - 0.7) + (u - 0.3) * (u - 0.3)) / 0.01);
    }
  }
  const auto spec = WaveletSpec::daubechies(2);
  for (int levels = 3; levels <= max_level(64, 4); ++levels) {
    const auto coeffs = fwt2(img, spec, levels);
    const double thresh = 1e-3 * coeffs.values.lpNorm<Eigen::Infinity>();
    const Index big = (coeffs.values.cwiseAbs().array() > thresh).count();
    CHECK(static_cast<double>(big) / static_cast<double>(coeffs.values.size()) < 0.25);
  }
}

TEST_CASE("invalid transform arguments are rejected") {
  const auto db2 = WaveletSpec::daubechies(2);
  CHECK_THROWS_AS(fwt2(Image::Zero(8, 16), db2, 1), std::invalid_argument);
  CHECK_THROWS_AS(fwt2(Image::Zero(12, 12), db2, 1), std::invalid_argument);
  CHECK_THROWS_AS(fwt2(Image::Zero(128, 128), db2, 6), std::invalid_argument);
  CHECK_THROWS_AS(fwt2(Image::Zero(128, 128), db2, 0), std::invalid_argument);

  CoeffVector c;
  c.side = 16;
  c.levels = 2;
  c.values = Vector::Zero(100);  // wrong length
  CHECK_THROWS_AS(ifwt2(c, db2), std::invalid_argument);
}
