#pragma once

#include <Eigen/Dense>

namespace cava {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Eigen::Index;

/// Grayscale raster, rows = y, cols = x, intensities in [0,1].
template <typename Scalar>
using ImageT = MatrixX<Scalar>;
using Image = ImageT<double>;

constexpr bool is_power_of_two(Index v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace cava
