#include "schedprice/logit_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace schedprice {

namespace {

LogitEval eval(const LogitDesign& design, RowSubset rows, const Eigen::VectorXd& theta,
               EvalLevel level, bool parallel) {
  return parallel ? evaluate_logit_parallel(design, rows, theta, level)
                  : evaluate_logit_serial(design, rows, theta, level);
}

Eigen::VectorXd clamp(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

// Solves (H + lambda I) d = -g with the smallest lambda from a short ladder
// that gives a positive definite system.
Eigen::VectorXd damped_newton(const Eigen::MatrixXd& h, const Eigen::VectorXd& g) {
  const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
  double lambda = 0.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    Eigen::MatrixXd a = h;
    a.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd d = llt.solve(-g);
      if (d.allFinite()) return d;
    }
    lambda = lambda == 0.0 ? 1e-12 * scale : lambda * 10.0;
  }
  return -g / scale;
}

}  // namespace

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  Eigen::VectorXd pg = gradient;
  for (Eigen::Index k = 0; k < pg.size(); ++k) {
    if (theta[k] <= lower[k] && pg[k] > 0.0) pg[k] = 0.0;
    if (theta[k] >= upper[k] && pg[k] < 0.0) pg[k] = 0.0;
  }
  return pg;
}

BoxFitResult fit_logit_box(const LogitDesign& design, RowSubset rows, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const Eigen::VectorXd& start,
                           const BoxFitConfig& config) {
  const Eigen::Index P = static_cast<Eigen::Index>(design.num_features());
  if (lower.size() != P || upper.size() != P || start.size() != P) {
    throw std::invalid_argument("bounds/start do not match design width");
  }
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("empty box");

  BoxFitResult res;
  res.theta = clamp(start, lower, upper);
  LogitEval cur = eval(design, rows, res.theta, EvalLevel::Hessian, config.parallel);

  for (res.iterations = 0;; ++res.iterations) {
    Eigen::VectorXd pg = projected_gradient(res.theta, cur.gradient, lower, upper);
    res.projected_grad_norm = pg.lpNorm<Eigen::Infinity>();
    if (res.projected_grad_norm <= config.grad_tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= config.max_iter) break;

    // Epsilon-active set: coordinates at (or numerically at) a bound whose
    // gradient pushes outward are held fixed for the Newton step.
    const double eps = std::min(1e-8, res.projected_grad_norm);
    std::vector<Eigen::Index> free;
    for (Eigen::Index k = 0; k < P; ++k) {
      const bool at_lo = res.theta[k] <= lower[k] + eps && cur.gradient[k] > 0.0;
      const bool at_hi = res.theta[k] >= upper[k] - eps && cur.gradient[k] < 0.0;
      if (!at_lo && !at_hi) free.push_back(k);
    }
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(P);
    if (!free.empty()) {
      const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd hf(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index i = 0; i < nf; ++i) {
        gf[i] = cur.gradient[free[i]];
        for (Eigen::Index j = 0; j < nf; ++j) hf(i, j) = cur.hessian(free[i], free[j]);
      }
      Eigen::VectorXd df = damped_newton(hf, gf);
      for (Eigen::Index i = 0; i < nf; ++i) dir[free[i]] = df[i];
    }
    for (Eigen::Index k = 0; k < P; ++k) {
      if (std::find(free.begin(), free.end(), k) == free.end()) dir[k] = -cur.gradient[k];
    }

    // Once the predicted decrease is below what the NLL can resolve in
    // double precision, take the full step: Armijo comparisons are noise.
    const double decrement = -cur.gradient.dot(dir);
    const double resolvable = 1e-11 * std::max(1.0, std::abs(cur.nll));
    double t = 1.0;
    Eigen::VectorXd next = clamp(res.theta + dir, lower, upper);
    if (decrement > resolvable) {
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        next = clamp(res.theta + t * dir, lower, upper);
        const double f = eval(design, rows, next, EvalLevel::Value, config.parallel).nll;
        const double armijo = cur.gradient.dot(next - res.theta);
        if (std::isfinite(f) && f <= cur.nll + 1e-4 * armijo) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) break;
    }
    if ((next - res.theta).lpNorm<Eigen::Infinity>() == 0.0) break;
    res.theta = next;
    cur = eval(design, rows, res.theta, EvalLevel::Hessian, config.parallel);
  }
  res.nll = cur.nll;
  res.hessian = cur.hessian;
  return res;
}

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& hessian) {
  const Eigen::Index P = hessian.rows();
  Eigen::VectorXd se = Eigen::VectorXd::Constant(P, std::numeric_limits<double>::quiet_NaN());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return se;
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(P, P));
  for (Eigen::Index k = 0; k < P; ++k) {
    if (inv(k, k) > 0.0 && std::isfinite(inv(k, k))) se[k] = std::sqrt(inv(k, k));
  }
  return se;
}

}  // namespace schedprice
