#pragma once

#include "mblr/model.hpp"

#include <Eigen/Dense>

#include <functional>

namespace mblr {

struct NewtonOptions {
  double grad_tol = 1e-6;
  int max_iter = 200;
  int max_halvings = 40;
};

struct NewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;  // Hessian at x
  int iterations = 0;
  int halvings = 0;  // total step halvings over the run
  bool converged = false;
  double grad_norm = 0.0;  // infinity norm at exit
};

/// Objective to maximize. `derivatives` must fill value, grad and hess.
struct Objective {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Evaluation(const Eigen::VectorXd&)> derivatives;
};

/// Damped Newton ascent: a ridge is added until the negated Hessian admits
/// a Cholesky factorization, and the step is halved until the objective does
/// not decrease. Stops when the gradient infinity norm drops below grad_tol.
NewtonResult newton_maximize(const Objective& f, Eigen::VectorXd x0, const NewtonOptions& opts = {});

/// (-H)^{-1}. When -H is not positive definite a jitter of 1e-8 * max|diag|
/// is added and escalated by 100x up to three times; throws NumericalError
/// if that still fails.
Eigen::MatrixXd inverse_negative_hessian(const Eigen::MatrixXd& hessian);

/// log det(-H) via Cholesky; nullopt when -H is not positive definite.
std::optional<double> log_det_negative(const Eigen::MatrixXd& hessian);

}  // namespace mblr
