#pragma once

#include <Eigen/Dense>

#include "schedprice/logit_kernels.hpp"

namespace schedprice {

struct BoxFitConfig {
  /// Convergence when the projected gradient's infinity norm is at most this.
  double grad_tol = 1e-6;
  int max_iter = 500;
  /// Use the OpenMP kernel for likelihood sums.
  bool parallel = true;
};

struct BoxFitResult {
  Eigen::VectorXd theta;
  double nll = 0.0;
  /// Infinity norm of the projected gradient at theta.
  double projected_grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Hessian of the NLL at theta (observed information).
  Eigen::MatrixXd hessian;
};

/// Projected gradient on the box: components pushing out of an active
/// bound are zeroed.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// Minimizes the logit NLL over lower <= theta <= upper with a projected
/// Newton method (free-variable Newton step, Armijo search along the
/// projection arc). The NLL is convex so the start point only affects speed.
BoxFitResult fit_logit_box(const LogitDesign& design, RowSubset rows, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Eigen::VectorXd& start,
                           const BoxFitConfig& config);

/// Standard errors from the inverse Hessian; NaN where the Hessian is
/// singular along that coordinate.
Eigen::VectorXd standard_errors(const Eigen::MatrixXd& hessian);

}  // namespace schedprice
