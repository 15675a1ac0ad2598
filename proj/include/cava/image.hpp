#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cava/types.hpp"

namespace cava {

/// Bilinear sample of `img` at fractional (y, x), clamped to the border.
template <typename Scalar>
Scalar bilinear_at(const MatrixX<Scalar>& img, double y, double x) {
  const Index h = img.rows(), w = img.cols();
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const Index y0 = static_cast<Index>(std::floor(y));
  const Index x0 = static_cast<Index>(std::floor(x));
  const Index y1 = std::min(y0 + 1, h - 1);
  const Index x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  return static_cast<Scalar>((1.0 - fy) * ((1.0 - fx) * img(y0, x0) + fx * img(y0, x1)) +
                             fy * ((1.0 - fx) * img(y1, x0) + fx * img(y1, x1)));
}

/// Center-crop to the largest centered square, then bilinear-resample to
/// side x side (pixel centers aligned). Identity when already side x side.
inline Image preprocess(const Image& img, int side, bool allow_upsample = false) {
  if (!is_power_of_two(side)) {
    throw std::invalid_argument("preprocess: side must be a power of two, got " +
                                std::to_string(side));
  }
  const Index s0 = std::min(img.rows(), img.cols());
  if (s0 < side && !allow_upsample) {
    throw std::invalid_argument("preprocess: image square side " + std::to_string(s0) +
                                " is smaller than the requested side " +
                                std::to_string(side) + " and upsampling is disabled");
  }
  const Index ry = (img.rows() - s0) / 2;
  const Index rx = (img.cols() - s0) / 2;
  Image crop = img.block(ry, rx, s0, s0);
  if (s0 == side) return crop;

  const double scale = static_cast<double>(s0) / side;
  Image out(side, side);
  for (Index i = 0; i < side; ++i) {
    const double y = (static_cast<double>(i) + 0.5) * scale - 0.5;
    for (Index j = 0; j < side; ++j) {
      const double x = (static_cast<double>(j) + 0.5) * scale - 0.5;
      out(i, j) = bilinear_at(crop, y, x);
    }
  }
  return out;
}

/// Affine-rescale to span [0,1]; constant images map to 0.
inline Image normalize_minmax(const Image& img) {
  const double lo = img.minCoeff();
  const double hi = img.maxCoeff();
  if (hi - lo <= 0.0) return Image::Zero(img.rows(), img.cols());
  return (img.array() - lo) / (hi - lo);
}

inline Image clip01(const Image& img) {
  return img.array().min(1.0).max(0.0);
}

}  // namespace cava
