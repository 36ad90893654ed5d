#include "mblr/newton.hpp"

#include "mblr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mblr {

namespace {

Eigen::VectorXd newton_direction(const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
  const Eigen::Index n = H.rows();
  Eigen::MatrixXd A = -H;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success) return llt.solve(g);
  const double scale = std::max(A.diagonal().cwiseAbs().maxCoeff(), 1.0);
  for (double ridge = 1e-8 * scale; ridge < 1e12 * scale; ridge *= 10.0) {
    llt.compute(A + ridge * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.solve(g);
  }
  // Gradient ascent as a last resort.
  return g / scale;
}

}  // namespace

NewtonResult newton_maximize(const Objective& f, Eigen::VectorXd x0, const NewtonOptions& opts) {
  NewtonResult res;
  res.x = std::move(x0);
  Evaluation ev = f.derivatives(res.x);
  if (!std::isfinite(ev.value)) throw NumericalError("Newton start has non-finite objective");
  for (;;) {
    res.value = ev.value;
    res.grad = ev.grad;
    res.hess = ev.hess;
    res.grad_norm = ev.grad.size() ? ev.grad.cwiseAbs().maxCoeff() : 0.0;
    if (res.grad_norm < opts.grad_tol) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= opts.max_iter) return res;
    ++res.iterations;

    const Eigen::VectorXd step = newton_direction(ev.hess, ev.grad);
    // Near the optimum value differences drop below rounding; there a step
    // is accepted if it reduces the gradient norm instead.
    const double noise = 1e-13 * std::max(1.0, std::abs(res.value));
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      const Eigen::VectorXd trial = res.x + t * step;
      const double v = f.value(trial);
      if (std::isfinite(v) && v >= res.value) {
        res.x = trial;
        ev = f.derivatives(res.x);
        accepted = true;
        break;
      }
      if (std::isfinite(v) && res.value - v <= noise) {
        Evaluation tev = f.derivatives(trial);
        if (tev.grad.cwiseAbs().maxCoeff() < res.grad_norm) {
          res.x = trial;
          ev = std::move(tev);
          accepted = true;
          break;
        }
      }
      t *= 0.5;
      ++res.halvings;
    }
    if (!accepted) return res;
  }
}

Eigen::MatrixXd inverse_negative_hessian(const Eigen::MatrixXd& hessian) {
  const Eigen::Index n = hessian.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd A = -0.5 * (hessian + hessian.transpose());
  const double eps = 1e-8 * std::max(A.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(A + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
      return 0.5 * (inv + inv.transpose());
    }
    jitter = attempt == 0 ? eps : jitter * 100.0;
  }
  throw NumericalError("Hessian is not negative definite after 3 jitter escalations");
}

std::optional<double> log_det_negative(const Eigen::MatrixXd& hessian) {
  if (hessian.rows() == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(-hessian);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace mblr
