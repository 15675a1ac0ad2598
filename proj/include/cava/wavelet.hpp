#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cava/types.hpp"

namespace cava {

namespace detail {

// Daubechies scaling (low-pass) filters, extremal-phase convention, generated
// by spectral factorization of the Daubechies polynomial (mpmath, 50 digits).
// db2 equals the closed form {(1+s3), (3+s3), (3-s3), (1-s3)} / (4*sqrt(2)).
inline constexpr double kDb1[] = {0.70710678118654752440, 0.70710678118654752440};
inline constexpr double kDb2[] = {0.48296291314453414337, 0.83651630373780790558, 0.22414386804201338103, -0.12940952255126038117};
inline constexpr double kDb3[] = {0.33267055295008261600, 0.80689150931109257649, 0.45987750211849157010, -0.13501102001025458870, -0.085441273882026661693, 0.035226291885709536603};
inline constexpr double kDb4[] = {0.23037781330889650086, 0.71484657055291564709, 0.63088076792985890788, -0.027983769416859854211, -0.18703481171909308408, 0.030841381835560763627, 0.032883011666885199735, -0.010597401785069032105};
inline constexpr double kDb5[] = {0.16010239797419291448, 0.60382926979718967054, 0.72430852843777292773, 0.13842814590132073151, -0.24229488706638203186, -0.032244869584638374648, 0.077571493840045713523, -0.0062414902127982742742, -0.012580751999081999469, 0.0033357252854737712780};
inline constexpr double kDb6[] = {0.11154074335010946362, 0.49462389039845308568, 0.75113390802109535068, 0.31525035170919762909, -0.22626469396543982008, -0.12976686756726193556, 0.097501605587323049102, 0.027522865530305728626, -0.031582039317486029565, 0.00055384220116149613925, 0.0047772575109455106396, -0.0010773010853084795649};
inline constexpr double kDb7[] = {0.077852054085009179020, 0.39653931948191730654, 0.72913209084623511992, 0.46978228740519312247, -0.14390600392856497541, -0.22403618499387498264, 0.071309219266830264751, 0.080612609151083071913, -0.038029936935014413580, -0.016574541630666880654, 0.012550998556099840613, 0.00042957797292136652113, -0.0018016407040474909153, 0.00035371379997452024845};
inline constexpr double kDb8[] = {0.054415842243104009955, 0.31287159091429997066, 0.67563073629728980681, 0.58535468365420671277, -0.015829105256349305667, -0.28401554296154692652, 0.00047248457391328277036, 0.12874742662047845886, -0.017369301001807546170, -0.044088253930794751507, 0.013981027917398281649, 0.0087460940474057767164, -0.0048703529934515743104, -0.00039174037337694704630, 0.00067544940645056936637, -0.00011747678412476953373};
inline constexpr double kDb9[] = {0.038077947363878346589, 0.24383467461259035373, 0.60482312369011111190, 0.65728807805130053808, 0.13319738582500757619, -0.29327378327917490881, -0.096840783222976460514, 0.14854074933810638014, 0.030725681479333379212, -0.067632829061329973676, 0.00025094711483145195759, 0.022361662123679097205, -0.0047232047577513972779, -0.0042815036824634298345, 0.0018476468830562264766, 0.00023038576352319596721, -0.00025196318894271013697, 0.000039347320316271599481};
inline constexpr double kDb10[] = {0.026670057900555553587, 0.18817680007769148902, 0.52720118893172558648, 0.68845903945360356574, 0.28117234366057746075, -0.24984642432731537942, -0.19594627437737704350, 0.12736934033579326008, 0.093057364603572351160, -0.071394147166397087145, -0.029457536821875812858, 0.033212674059341001740, 0.0036065535669561696554, -0.010733175483330575044, 0.0013953517470529011658, 0.0019924052951850561172, -0.00068585669495971162656, -0.00011646685512928545095, 0.000093588670320069591334, -0.000013264202894521244812};

inline std::span<const double> daubechies_taps(int order) {
  switch (order) {
    case 1: return kDb1;
    case 2: return kDb2;
    case 3: return kDb3;
    case 4: return kDb4;
    case 5: return kDb5;
    case 6: return kDb6;
    case 7: return kDb7;
    case 8: return kDb8;
    case 9: return kDb9;
    case 10: return kDb10;
    default:
      throw std::invalid_argument("daubechies order must be in [1,10], got " +
                                  std::to_string(order));
  }
}

}  // namespace detail

/// Orthonormal two-channel filter bank. `lo` is the scaling filter, `hi` its
/// quadrature mirror, hi[t] = (-1)^t lo[len-1-t]. The same pair is used for
/// analysis and synthesis (orthogonal bank).
struct WaveletSpec {
  int order = 2;
  std::vector<double> lo;
  std::vector<double> hi;

  static WaveletSpec daubechies(int order) {
    const auto taps = detail::daubechies_taps(order);
    WaveletSpec w;
    w.order = order;
    w.lo.assign(taps.begin(), taps.end());
    w.hi.resize(w.lo.size());
    const int len = static_cast<int>(w.lo.size());
    for (int t = 0; t < len; ++t) {
      w.hi[t] = (t % 2 == 0 ? 1.0 : -1.0) * w.lo[static_cast<std::size_t>(len - 1 - t)];
    }
    return w;
  }

  int filter_len() const { return static_cast<int>(lo.size()); }
};

/// Deepest usable decomposition level for a periodized transform,
/// floor(log2(side / (filter_len - 1))).
inline int max_level(int side, int filter_len) {
  if (side < filter_len) {
    throw std::invalid_argument("side " + std::to_string(side) +
                                " is smaller than the filter length " +
                                std::to_string(filter_len));
  }
  int level = 0;
  while (static_cast<std::int64_t>(filter_len - 1) << (level + 1) <= side) ++level;
  return level;
}

/// Subband offsets of the packed coefficient vector. Order: coarsest
/// approximation first, then per level from coarsest to finest the detail
/// subbands (horiz, vert, diag), each flattened row-major. The offsets
/// partition [0, side^2) exactly.
struct CoeffLayout {
  struct Band {
    Index offset = 0;
    Index band_side = 0;  // subband is band_side x band_side
    Index count() const { return band_side * band_side; }
  };
  struct LevelBands {
    Band horiz, vert, diag;
  };

  Index side = 0;
  int levels = 0;
  Band approx;
  std::vector<LevelBands> details;  // index 0 = coarsest level

  static CoeffLayout make(Index side, int levels) {
    CoeffLayout lay;
    lay.side = side;
    lay.levels = levels;
    Index off = 0;
    const Index a = side >> levels;
    lay.approx = {off, a};
    off += a * a;
    for (int lev = levels; lev >= 1; --lev) {
      const Index bs = side >> lev;
      LevelBands b;
      b.horiz = {off, bs};
      off += bs * bs;
      b.vert = {off, bs};
      off += bs * bs;
      b.diag = {off, bs};
      off += bs * bs;
      lay.details.push_back(b);
    }
    return lay;
  }

  Index total() const { return side * side; }
};

/// Stacked multi-level 2D wavelet coefficients of a side x side image.
template <typename Scalar>
struct CoeffVectorT {
  VectorX<Scalar> values;
  Index side = 0;
  int levels = 0;

  CoeffLayout layout() const { return CoeffLayout::make(side, levels); }
};
using CoeffVector = CoeffVectorT<double>;

namespace detail {

// One periodized analysis step: approx[k] = sum_t lo[t] x[(2k+t) mod n],
// detail[k] likewise with hi. n must be even and a power of two.
template <typename Scalar>
void dwt_periodic(const Scalar* x, Index n, const WaveletSpec& spec,
                  Scalar* approx, Scalar* det) {
  const Index half = n / 2;
  const Index mask = n - 1;
  const int len = spec.filter_len();
  for (Index k = 0; k < half; ++k) {
    Scalar a{};
    Scalar d{};
    for (int t = 0; t < len; ++t) {
      const Scalar v = x[(2 * k + t) & mask];
      a += static_cast<Scalar>(spec.lo[static_cast<std::size_t>(t)]) * v;
      d += static_cast<Scalar>(spec.hi[static_cast<std::size_t>(t)]) * v;
    }
    approx[k] = a;
    det[k] = d;
  }
}

// Transpose of dwt_periodic (exact inverse for an orthonormal bank):
// x[i] = sum_k approx[k] lo[(i-2k) mod n] + detail[k] hi[(i-2k) mod n].
template <typename Scalar>
void idwt_periodic(const Scalar* approx, const Scalar* det, Index n,
                   const WaveletSpec& spec, Scalar* x) {
  const Index half = n / 2;
  const Index mask = n - 1;
  const int len = spec.filter_len();
  for (Index i = 0; i < n; ++i) x[i] = Scalar{};
  for (Index k = 0; k < half; ++k) {
    const Scalar a = approx[k];
    const Scalar d = det[k];
    for (int t = 0; t < len; ++t) {
      const Index i = (2 * k + t) & mask;
      x[i] += a * static_cast<Scalar>(spec.lo[static_cast<std::size_t>(t)]) +
              d * static_cast<Scalar>(spec.hi[static_cast<std::size_t>(t)]);
    }
  }
}

}  // namespace detail

/// Multi-level periodized 2D DWT. The image must be square with a
/// power-of-two side; 1 <= levels <= max_level(side, filter_len).
template <typename Derived>
CoeffVectorT<typename Derived::Scalar> fwt2(const Eigen::MatrixBase<Derived>& img_expr,
                                            const WaveletSpec& spec, int levels) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> img = img_expr;
  const Index side = img.rows();
  if (img.cols() != side) {
    throw std::invalid_argument("fwt2: image must be square, got " +
                                std::to_string(img.rows()) + "x" +
                                std::to_string(img.cols()));
  }
  if (!is_power_of_two(side)) {
    throw std::invalid_argument("fwt2: side must be a power of two, got " +
                                std::to_string(side));
  }
  const int lmax = max_level(static_cast<int>(side), spec.filter_len());
  if (levels < 1 || levels > lmax) {
    throw std::invalid_argument("fwt2: level " + std::to_string(levels) +
                                " out of range [1," + std::to_string(lmax) + "]");
  }

  const CoeffLayout lay = CoeffLayout::make(side, levels);
  CoeffVectorT<Scalar> out;
  out.side = side;
  out.levels = levels;
  out.values.resize(lay.total());

  MatrixX<Scalar> cur = img;
  std::vector<Scalar> line(static_cast<std::size_t>(side));
  std::vector<Scalar> lo(static_cast<std::size_t>(side / 2));
  std::vector<Scalar> hi(static_cast<std::size_t>(side / 2));

  auto pack = [&out](const MatrixX<Scalar>& band, const CoeffLayout::Band& b) {
    Index p = b.offset;
    for (Index r = 0; r < b.band_side; ++r)
      for (Index c = 0; c < b.band_side; ++c) out.values[p++] = band(r, c);
  };

  for (int lev = 1; lev <= levels; ++lev) {
    const Index s = cur.rows();
    const Index h = s / 2;
    // rows (along x)
    MatrixX<Scalar> rowpass(s, s);
    for (Index r = 0; r < s; ++r) {
      for (Index c = 0; c < s; ++c) line[static_cast<std::size_t>(c)] = cur(r, c);
      detail::dwt_periodic(line.data(), s, spec, lo.data(), hi.data());
      for (Index c = 0; c < h; ++c) {
        rowpass(r, c) = lo[static_cast<std::size_t>(c)];
        rowpass(r, h + c) = hi[static_cast<std::size_t>(c)];
      }
    }
    // columns (along y)
    MatrixX<Scalar> z(s, s);
    for (Index c = 0; c < s; ++c) {
      for (Index r = 0; r < s; ++r) line[static_cast<std::size_t>(r)] = rowpass(r, c);
      detail::dwt_periodic(line.data(), s, spec, lo.data(), hi.data());
      for (Index r = 0; r < h; ++r) {
        z(r, c) = lo[static_cast<std::size_t>(r)];
        z(h + r, c) = hi[static_cast<std::size_t>(r)];
      }
    }
    // quadrants: LL = approx, LH (x-low, y-high) = horiz, HL = vert, HH = diag
    const auto& bands = lay.details[static_cast<std::size_t>(levels - lev)];
    pack(z.block(h, 0, h, h), bands.horiz);
    pack(z.block(0, h, h, h), bands.vert);
    pack(z.block(h, h, h, h), bands.diag);
    cur = z.topLeftCorner(h, h);
  }
  pack(cur, lay.approx);
  return out;
}

/// Exact inverse of fwt2 (orthonormal synthesis).
template <typename Scalar>
MatrixX<Scalar> ifwt2(const CoeffVectorT<Scalar>& coeffs, const WaveletSpec& spec) {
  const Index side = coeffs.side;
  const int levels = coeffs.levels;
  if (side <= 0 || !is_power_of_two(side)) {
    throw std::invalid_argument("ifwt2: invalid side " + std::to_string(side));
  }
  const int lmax = max_level(static_cast<int>(side), spec.filter_len());
  if (levels < 1 || levels > lmax) {
    throw std::invalid_argument("ifwt2: level " + std::to_string(levels) +
                                " inconsistent with side " + std::to_string(side));
  }
  const CoeffLayout lay = CoeffLayout::make(side, levels);
  if (coeffs.values.size() != lay.total()) {
    throw std::invalid_argument(
        "ifwt2: coefficient count " + std::to_string(coeffs.values.size()) +
        " does not match layout size " + std::to_string(lay.total()));
  }

  auto unpack = [&coeffs](const CoeffLayout::Band& b) {
    MatrixX<Scalar> band(b.band_side, b.band_side);
    Index p = b.offset;
    for (Index r = 0; r < b.band_side; ++r)
      for (Index c = 0; c < b.band_side; ++c) band(r, c) = coeffs.values[p++];
    return band;
  };

  MatrixX<Scalar> cur = unpack(lay.approx);
  std::vector<Scalar> line(static_cast<std::size_t>(side));
  std::vector<Scalar> lo(static_cast<std::size_t>(side / 2));
  std::vector<Scalar> hi(static_cast<std::size_t>(side / 2));

  for (int lev = levels; lev >= 1; --lev) {
    const Index h = side >> lev;
    const Index s = 2 * h;
    const auto& bands = lay.details[static_cast<std::size_t>(levels - lev)];
    MatrixX<Scalar> z(s, s);
    z.topLeftCorner(h, h) = cur;
    z.block(h, 0, h, h) = unpack(bands.horiz);
    z.block(0, h, h, h) = unpack(bands.vert);
    z.block(h, h, h, h) = unpack(bands.diag);
    // invert column pass
    MatrixX<Scalar> rowpass(s, s);
    for (Index c = 0; c < s; ++c) {
      for (Index r = 0; r < h; ++r) {
        lo[static_cast<std::size_t>(r)] = z(r, c);
        hi[static_cast<std::size_t>(r)] = z(h + r, c);
      }
      detail::idwt_periodic(lo.data(), hi.data(), s, spec, line.data());
      for (Index r = 0; r < s; ++r) rowpass(r, c) = line[static_cast<std::size_t>(r)];
    }
    // invert row pass
    MatrixX<Scalar> img(s, s);
    for (Index r = 0; r < s; ++r) {
      for (Index c = 0; c < h; ++c) {
        lo[static_cast<std::size_t>(c)] = rowpass(r, c);
        hi[static_cast<std::size_t>(c)] = rowpass(r, h + c);
      }
      detail::idwt_periodic(lo.data(), hi.data(), s, spec, line.data());
      for (Index c = 0; c < s; ++c) img(r, c) = line[static_cast<std::size_t>(c)];
    }
    cur = std::move(img);
  }
  return cur;
}

}  // namespace cava
