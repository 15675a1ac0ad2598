#include "cava/recover.hpp"

#include <cmath>
#include <string>

namespace cava {

namespace {

enum class SpgStatus { Converged, Optimal, TauUpdate, IterCap, LineFail, Degenerate };

// Shared state of one SPG solve; basis_pursuit drives it across tau updates
// with warm starts.
class SpgEngine {
 public:
  SpgEngine(const SensingOperator& op, const Vector& y, const SolverOptions& opts)
      : op_(op), opts_(opts) {
    opts_.validate();
    scale_ = opts_.rescale_operator ? 1.0 / std::sqrt(static_cast<double>(op.cols()) / 2.0)
                                    : 1.0;
    y_ = scale_ * y;
    ynorm_raw_ = y.norm();
    x_ = Vector::Zero(op.cols());
    r_ = y_;
    f_ = 0.5 * r_.squaredNorm();
    g_ = -scale_ * op_.apply_adjoint(r_);
    f_best_ = f_;
    x_best_ = x_;
    step_max_dyn_ = opts_.step_max;
    history_.push_back(f_);
  }

  double residual_norm_raw() const { return std::sqrt(2.0 * f_) / scale_; }
  double dual_norm() const { return g_.lpNorm<Eigen::Infinity>(); }
  double objective() const { return f_; }
  const Vector& solution() const { return x_; }
  int iterations() const { return iters_; }
  const std::vector<double>& history() const { return history_; }

  // Feasibility is judged in original (unscaled) units so that converged
  // implies residual_norm <= feasibility_tol * max(1, ||y||).
  bool feasible() const {
    return residual_norm_raw() <= opts_.feasibility_tol * std::max(1.0, ynorm_raw_);
  }

  // Newton step on the Pareto curve for sigma = 0:
  // tau <- tau + phi / (-phi') with phi = ||r||, phi' = -||A^T r||_inf / ||r||ti.
  double next_tau(double tau) const {
    const double gnorm = dual_norm();
    if (gnorm <= 0.0) return tau;
    return tau + 2.0 * f_ / gnorm;
  }

  // Restores the best objective seen if the current iterate is worse.
  void restore_best() {
    if (f_best_ < f_) {
      x_ = x_best_;
      r_ = y_ - scale_ * op_.apply(x_);
      f_ = 0.5 * r_.squaredNorm();
      g_ = -scale_ * op_.apply_adjoint(r_);
    }
  }

  // Runs SPG iterations on the lasso subproblem at fixed tau until an exit
  // condition fires. fixed_tau selects the standalone-lasso stopping rules.
  SpgStatus run(double tau, bool fixed_tau) {
    // ensure feasibility after a tau change and refresh the memory window
    const double l1 = x_.lpNorm<1>();
    if (l1 > tau) {
      x_ = project_l1(x_, tau);
      r_ = y_ - scale_ * op_.apply(x_);
      f_ = 0.5 * r_.squaredNorm();
      g_ = -scale_ * op_.apply_adjoint(r_);
    }
    window_.assign(static_cast<std::size_t>(opts_.nonmonotone_window),
                   -std::numeric_limits<double>::infinity());
    window_[0] = f_;
    window_pos_ = 1 % static_cast<std::size_t>(opts_.nonmonotone_window);

    if (alpha_ <= 0.0) {
      const Vector d = project_l1(x_ - g_, tau) - x_;
      const double dnorm = d.lpNorm<Eigen::Infinity>();
      alpha_ = dnorm < 1.0 / step_max_dyn_
                   ? step_max_dyn_
                   : std::clamp(1.0 / dnorm, opts_.step_min, step_max_dyn_);
    }

    if (feasible()) return SpgStatus::Converged;

    double f_prev = f_;
    while (true) {
      if (iters_ >= opts_.max_iters) return SpgStatus::IterCap;
      ++iters_;

      const double f_max = *std::max_element(window_.begin(), window_.end());

      Vector x_new, r_new;
      double f_new = 0.0;
      if (!line_search_curvy(tau, f_max, x_new, r_new, f_new) &&
          !line_search_feasible_dir(tau, f_max, x_new, r_new, f_new)) {
        ++line_failures_;
        if (line_failures_ >= 3) return SpgStatus::LineFail;
        step_max_dyn_ = std::max(opts_.step_min * 10.0, step_max_dyn_ / 10.0);
        alpha_ = std::min(alpha_, step_max_dyn_);
        continue;
      }

      // gradient update and Barzilai-Borwein scaling
      const Vector g_new = -scale_ * op_.apply_adjoint(r_new);
      const Vector dx = x_new - x_;
      const Vector dg = g_new - g_;
      const double sts = dx.squaredNorm();
      const double sty = dx.dot(dg);
      alpha_ = sty <= 0.0 ? step_max_dyn_
                          : std::clamp(sts / sty, opts_.step_min, step_max_dyn_);

      x_ = std::move(x_new);
      r_ = std::move(r_new);
      g_ = g_new;
      f_ = f_new;
      window_[window_pos_] = f_;
      window_pos_ = (window_pos_ + 1) % static_cast<std::size_t>(opts_.nonmonotone_window);
      history_.push_back(f_);
      if (f_ < f_best_) {
        f_best_ = f_;
        x_best_ = x_;
      }

      // exit tests
      if (feasible()) return SpgStatus::Converged;
      const double gnorm = dual_norm();
      const double rnorm = std::sqrt(2.0 * f_);
      if (gnorm <= 1e-14 * std::max(1.0, rnorm)) return SpgStatus::Degenerate;

      const double gap = r_.dot(r_ - y_) + tau * gnorm;
      const double gap_rel = std::abs(gap) / std::max(1.0, f_);
      if (fixed_tau) {
        if (gap_rel <= opts_.opt_tol) return SpgStatus::Optimal;
      } else {
        // take the next Pareto Newton step once this subproblem is solved to
        // optimality or its objective has stalled (relative decrease test)
        const bool gap_done = gap_rel <= opts_.opt_tol;
        const bool stalled = std::abs(f_prev - f_) <= opts_.newton_tol * f_;
        if (gap_done || stalled) return SpgStatus::TauUpdate;
      }
      f_prev = f_;
    }
  }

 private:
  // Backtracks along the projected-gradient arc x(s) = P(x - s*alpha*g).
  bool line_search_curvy(double tau, double f_max, Vector& x_out, Vector& r_out,
                         double& f_out) {
    double step = 1.0;
    double damp = 1.0;  // extra damping when projection keeps collapsing
    double prev_dxnorm = 0.0;
    int n_safe = 0;
    for (int ls = 0; ls <= opts_.max_line_iters; ++ls) {
      const Vector x_new = project_l1(x_ - (step * damp * alpha_) * g_, tau);
      const Vector r_new = y_ - scale_ * op_.apply(x_new);
      const double f_new = 0.5 * r_new.squaredNorm();
      const Vector dx = x_new - x_;
      const double gtd = damp * g_.dot(dx);
      if (gtd >= 0.0) return false;
      if (f_new <= f_max + opts_.sufficient_decrease * step * gtd) {
        x_out = x_new;
        r_out = r_new;
        f_out = f_new;
        return true;
      }
      step /= 2.0;

      // if successive projected trials barely move, damp the direction too
      const double dxnorm =
          dx.norm() / std::sqrt(static_cast<double>(std::max<Index>(1, x_.size())));
      if (std::abs(dxnorm - prev_dxnorm) <= 1e-6 * dxnorm) {
        const double gnorm =
            g_.norm() / std::sqrt(static_cast<double>(std::max<Index>(1, x_.size())));
        if (gnorm > 0.0) damp = dxnorm / gnorm / std::pow(2.0, n_safe);
        ++n_safe;
      }
      prev_dxnorm = dxnorm;
    }
    return false;
  }

  // Feasible-direction fallback: backtrack along d = P(x - alpha g) - x.
  bool line_search_feasible_dir(double tau, double f_max, Vector& x_out, Vector& r_out,
                                double& f_out) {
    const Vector d = project_l1(x_ - alpha_ * g_, tau) - x_;
    const double gtd = g_.dot(d);
    if (gtd >= 0.0) return false;
    double step = 1.0;
    for (int ls = 0; ls <= opts_.max_line_iters; ++ls) {
      const Vector x_new = x_ + step * d;
      const Vector r_new = y_ - scale_ * op_.apply(x_new);
      const double f_new = 0.5 * r_new.squaredNorm();
      if (f_new <= f_max + opts_.sufficient_decrease * step * gtd) {
        x_out = x_new;
        r_out = r_new;
        f_out = f_new;
        return true;
      }
      // safeguarded quadratic interpolation
      double t;
      if (step <= 0.1) {
        t = step / 2.0;
      } else {
        t = (-gtd * step * step) / (2.0 * (f_new - f_ - step * gtd));
        if (!(t > 0.1 * step) || !(t < 0.9 * step) || !std::isfinite(t)) t = step / 2.0;
      }
      step = t;
    }
    return false;
  }

  const SensingOperator& op_;
  SolverOptions opts_;
  double scale_ = 1.0;
  Vector y_, x_, r_, g_;
  double f_ = 0.0;
  double ynorm_raw_ = 0.0;
  double alpha_ = -1.0;  // computed on first run()
  double step_max_dyn_;
  Vector x_best_;
  double f_best_ = 0.0;
  std::vector<double> window_;
  std::size_t window_pos_ = 0;
  std::vector<double> history_;
  int iters_ = 0;
  int line_failures_ = 0;
};

RecoveryResult make_result(const SpgEngine& eng, const SolverOptions& opts,
                           bool converged) {
  RecoveryResult res;
  res.x_hat = eng.solution();
  res.residual_norm = eng.residual_norm_raw();
  res.l1_norm = res.x_hat.lpNorm<1>();
  res.iterations = eng.iterations();
  res.converged = converged;
  res.objective_history = eng.history();
  return res;
}

RecoveryResult zero_result(const SensingOperator& op, const Vector& y, bool converged) {
  RecoveryResult res;
  res.x_hat = Vector::Zero(op.cols());
  res.residual_norm = y.norm();
  res.l1_norm = 0.0;
  res.iterations = 0;
  res.converged = converged;
  return res;
}

void check_dims(const SensingOperator& op, const Vector& y, const char* who) {
  if (y.size() != op.rows()) {
    throw std::invalid_argument(std::string(who) + ": measurement length " +
                                std::to_string(y.size()) + " does not match m = " +
                                std::to_string(op.rows()));
  }
}

}  // namespace

RecoveryResult spg_lasso(const SensingOperator& op, const Vector& y, double tau,
                         const SolverOptions& opts) {
  check_dims(op, y, "spg_lasso");
  if (tau < 0.0) throw std::invalid_argument("spg_lasso: negative tau");
  const double ynorm = y.norm();
  if (ynorm == 0.0) return zero_result(op, y, true);
  if (tau == 0.0) {
    RecoveryResult res = zero_result(op, y, false);
    res.converged = ynorm <= opts.feasibility_tol * std::max(1.0, ynorm);
    return res;
  }
  SpgEngine eng(op, y, opts);
  const SpgStatus st = eng.run(tau, /*fixed_tau=*/true);
  eng.restore_best();
  return make_result(eng, opts, st == SpgStatus::Converged || eng.feasible());
}

RecoveryResult basis_pursuit(const SensingOperator& op, const Vector& y,
                             const SolverOptions& opts) {
  check_dims(op, y, "basis_pursuit");
  if (y.norm() == 0.0) return zero_result(op, y, true);

  SpgEngine eng(op, y, opts);
  std::vector<double> taus;
  double tau = 0.0;
  bool converged = false;
  for (int newton = 0; newton < opts.max_newton_iters; ++newton) {
    const double tau_next = eng.next_tau(tau);
    if (!(tau_next > tau) || !std::isfinite(tau_next)) break;  // degenerate curve
    tau = tau_next;
    taus.push_back(tau);
    const SpgStatus st = eng.run(tau, /*fixed_tau=*/false);
    if (st == SpgStatus::Converged) {
      converged = true;
      break;
    }
    if (st == SpgStatus::IterCap || st == SpgStatus::LineFail ||
        st == SpgStatus::Degenerate) {
      break;
    }
    // TauUpdate / Optimal: take the next Newton step
  }
  eng.restore_best();
  RecoveryResult res = make_result(eng, opts, converged || eng.feasible());
  res.newton_taus = std::move(taus);
  return res;
}

RecoveryResult omp(const SensingOperator& op, const Vector& y, int sparsity,
                   double residual_tol) {
  check_dims(op, y, "omp");
  if (sparsity < 1 || sparsity > op.rows()) {
    throw std::invalid_argument("omp: sparsity must be in [1, m], got " +
                                std::to_string(sparsity));
  }
  const double ynorm = y.norm();
  RecoveryResult res;
  res.x_hat = Vector::Zero(op.cols());
  if (ynorm == 0.0) {
    res.converged = true;
    return res;
  }

  Vector col_norm(op.cols());
  for (Index j = 0; j < op.cols(); ++j) col_norm[j] = op.column(j).norm();

  Vector r = y;
  std::vector<Index> active;
  Matrix cols(op.rows(), sparsity);
  Vector x_active;
  const double stop = residual_tol * std::max(1.0, ynorm);

  while (static_cast<int>(active.size()) < sparsity && r.norm() > stop) {
    const Vector corr = op.apply_adjoint(r);
    Index best = -1;
    double best_score = 0.0;
    for (Index j = 0; j < op.cols(); ++j) {
      if (col_norm[j] == 0.0) continue;
      const double score = std::abs(corr[j]) / col_norm[j];
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0 || best_score == 0.0) break;  // residual orthogonal to all columns
    active.push_back(best);
    cols.col(static_cast<Index>(active.size() - 1)) = op.column(best);

    const auto A = cols.leftCols(static_cast<Index>(active.size()));
    const Eigen::ColPivHouseholderQR<Matrix> qr(A);
    if (qr.rank() < static_cast<Index>(active.size())) {
      throw std::runtime_error("omp: active-set system is singular (dependent columns)");
    }
    x_active = qr.solve(y);
    r = y - A * x_active;
  }

  for (std::size_t t = 0; t < active.size(); ++t) {
    res.x_hat[active[t]] = x_active[static_cast<Index>(t)];
  }
  res.residual_norm = r.norm();
  res.l1_norm = res.x_hat.lpNorm<1>();
  res.iterations = static_cast<int>(active.size());
  res.converged = res.residual_norm <= stop;
  return res;
}

std::pair<Image, RecoveryResult> reconstruct_image(const CompressedSample& sample,
                                                   const SensingOperator& op,
                                                   const WaveletSpec& spec, int level,
                                                   int side, const SolverOptions& opts) {
  if (sample.operator_seed != op.seed()) {
    throw std::invalid_argument("reconstruct_image: sample was acquired with a different "
                                "operator seed");
  }
  if (op.cols() != static_cast<Index>(side) * side) {
    throw std::invalid_argument("reconstruct_image: operator n does not match side^2");
  }
  check_dims(op, sample.y, "reconstruct_image");

  RecoveryResult rec = basis_pursuit(op, sample.y, opts);
  CoeffVector coeffs;
  coeffs.values = rec.x_hat;
  coeffs.side = side;
  coeffs.levels = level;
  Image img = ifwt2(coeffs, spec);
  return {std::move(img), std::move(rec)};
}

}  // namespace cava
