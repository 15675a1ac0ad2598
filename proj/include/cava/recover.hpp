#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cava/sensing.hpp"
#include "cava/types.hpp"
#include "cava/wavelet.hpp"

namespace cava {

/// Euclidean projection onto the L1 ball of radius tau, by soft-thresholding
/// at the exact level found by sort-and-scan (O(n log n)).
template <typename Derived>
VectorX<typename Derived::Scalar> project_l1(const Eigen::MatrixBase<Derived>& v,
                                             typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (tau < Scalar{0}) throw std::invalid_argument("project_l1: negative radius");
  VectorX<Scalar> out = v;
  if (tau == Scalar{0}) return VectorX<Scalar>::Zero(v.size());
  if (out.template lpNorm<1>() <= tau) return out;

  std::vector<Scalar> mag(static_cast<std::size_t>(out.size()));
  for (Index i = 0; i < out.size(); ++i) mag[static_cast<std::size_t>(i)] = std::abs(out[i]);
  std::sort(mag.begin(), mag.end(), std::greater<Scalar>());

  Scalar cum{0}, theta{0};
  for (std::size_t k = 0; k < mag.size(); ++k) {
    cum += mag[k];
    const Scalar t = (cum - tau) / static_cast<Scalar>(k + 1);
    if (t >= mag[k]) break;  // remaining entries all threshold to zero
    theta = t;
  }
  for (Index i = 0; i < out.size(); ++i) {
    const Scalar m = std::abs(out[i]) - theta;
    out[i] = m > Scalar{0} ? (out[i] > Scalar{0} ? m : -m) : Scalar{0};
  }
  return out;
}

/// Peak signal-to-noise ratio in dB with peak 1.0; +inf when images match.
template <typename DerivedA, typename DerivedB>
double psnr(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("psnr: image dimensions differ");
  }
  const double mse = (a.derived().template cast<double>() -
                      b.derived().template cast<double>())
                         .squaredNorm() /
                     static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

struct SolverOptions {
  int max_iters = 3000;            // total inner SPG iterations
  double feasibility_tol = 1e-4;   // residual target, relative to max(1, ||y||)
  double step_min = 1e-16;         // Barzilai-Borwein step bounds
  double step_max = 1e16;
  int nonmonotone_window = 10;     // line-search objective memory
  double newton_tol = 1e-4;        // stall threshold driving the next Pareto step
  double opt_tol = 1e-5;           // duality-gap optimality for a fixed tau
  int max_newton_iters = 100;
  double sufficient_decrease = 1e-4;
  int max_line_iters = 16;
  bool rescale_operator = false;   // uniform 1/sqrt(n/2) scaling inside the solver

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("solver: max_iters must be >= 1");
    if (feasibility_tol <= 0 || newton_tol <= 0 || opt_tol <= 0) {
      throw std::invalid_argument("solver: tolerances must be positive");
    }
    if (!(step_min < step_max) || step_min <= 0) {
      throw std::invalid_argument("solver: require 0 < step_min < step_max");
    }
    if (nonmonotone_window < 1) {
      throw std::invalid_argument("solver: nonmonotone_window must be >= 1");
    }
  }
};

struct RecoveryResult {
  Vector x_hat;
  double residual_norm = 0.0;  // ||Phi x_hat - y||_2
  double l1_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> newton_taus;         // tau after each Pareto Newton step
  std::vector<double> objective_history;   // 0.5 ||r||^2 per accepted iterate
};

/// min 0.5 ||Phi x - y||^2 subject to ||x||_1 <= tau, by projected gradient
/// with Barzilai-Borwein steps and a nonmonotone line search over the last
/// nonmonotone_window objective values. Returns the best iterate found;
/// converged means the residual target was reached (an optimal-but-
/// infeasible lasso solution reports converged = false, which is not an
/// error).
RecoveryResult spg_lasso(const SensingOperator& op, const Vector& y, double tau,
                         const SolverOptions& opts = {});

/// Basis pursuit min ||x||_1 s.t. Phi x = y (noiseless), by Newton root
/// finding on the Pareto curve phi(tau) = ||Phi x_tau - y||: tau steps by
/// phi(tau) * ||r|| / ||Phi^T r||_inf, each lasso subproblem solved by SPG
/// warm-started from the previous solution.
RecoveryResult basis_pursuit(const SensingOperator& op, const Vector& y,
                             const SolverOptions& opts = {});

/// Orthogonal matching pursuit: grows a support greedily by the column with
/// the largest normalized residual correlation (ties to the lowest index),
/// least-squares refitting on the active set each iteration. Stops after
/// `sparsity` selections or when the residual drops below
/// residual_tol * max(1, ||y||).
RecoveryResult omp(const SensingOperator& op, const Vector& y, int sparsity,
                   double residual_tol = 1e-12);

/// Basis-pursuit reconstruction of the image behind a compressed sample.
/// The returned image is not clipped; clamp to [0,1] for display only.
std::pair<Image, RecoveryResult> reconstruct_image(const CompressedSample& sample,
                                                   const SensingOperator& op,
                                                   const WaveletSpec& spec, int level,
                                                   int side,
                                                   const SolverOptions& opts = {});

}  // namespace cava
