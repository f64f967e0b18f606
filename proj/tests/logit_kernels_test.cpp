#include <cmath>
#include <limits>

#include <gtest/gtest.h>
#include <omp.h>

#include "schedprice/logit_fit.hpp"
#include "schedprice/logit_kernels.hpp"
#include "schedprice/rng.hpp"

namespace schedprice {
namespace {

LogitDesign random_design(Rng& rng, std::size_t n, std::size_t p, const Eigen::VectorXd& truth) {
  LogitDesign d(p);
  std::vector<double> rows;
  std::vector<double> w;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t k = 1 + rng.below(6);
    rows.assign(k * p, 0.0);
    w.assign(k + 1, 0.0);
    w[0] = 1.0;
    for (std::size_t a = 0; a < k; ++a) {
      double u = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        rows[a * p + j] = rng.uniform(-2.0, 2.0);
        u += rows[a * p + j] * truth[static_cast<Eigen::Index>(j)];
      }
      w[a + 1] = std::exp(u);
    }
    d.add_situation(rows, static_cast<int>(rng.categorical(w)) - 1);
  }
  return d;
}

TEST(LogitKernels, SerialAndParallelAgree) {
  Rng rng(31);
  Eigen::VectorXd truth(4);
  truth << 0.5, -1.0, 0.2, 0.0;
  const LogitDesign d = random_design(rng, 5000, 4, truth);
  const auto rows = all_rows(d);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(4, 0.1);
  const LogitEval s = evaluate_logit_serial(d, rows, theta, EvalLevel::Hessian);
  const LogitEval p = evaluate_logit_parallel(d, rows, theta, EvalLevel::Hessian);
  EXPECT_NEAR(s.nll, p.nll, 1e-10 * s.nll);
  EXPECT_LT((s.gradient - p.gradient).norm(), 1e-9 * s.gradient.norm());
  EXPECT_LT((s.hessian - p.hessian).norm(), 1e-9 * s.hessian.norm());
}

TEST(LogitKernels, ParallelResultIndependentOfThreadCount) {
  Rng rng(32);
  Eigen::VectorXd truth(3);
  truth << 1.0, -0.5, 0.25;
  const LogitDesign d = random_design(rng, 4000, 3, truth);
  const auto rows = all_rows(d);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const LogitEval one = evaluate_logit_parallel(d, rows, truth, EvalLevel::Hessian);
  omp_set_num_threads(4);
  const LogitEval four = evaluate_logit_parallel(d, rows, truth, EvalLevel::Hessian);
  omp_set_num_threads(saved);
  EXPECT_EQ(one.nll, four.nll);
  EXPECT_EQ(one.gradient, four.gradient);
  EXPECT_EQ(one.hessian, four.hessian);
}

TEST(LogitKernels, GradientAndHessianMatchFiniteDifferences) {
  Rng rng(33);
  Eigen::VectorXd truth(3);
  truth << 0.3, -0.7, 1.1;
  const LogitDesign d = random_design(rng, 300, 3, truth);
  const auto rows = all_rows(d);
  const Eigen::VectorXd theta = truth * 0.5;
  const LogitEval e = evaluate_logit_serial(d, rows, theta, EvalLevel::Hessian);
  for (Eigen::Index k = 0; k < 3; ++k) {
    const double h = 1e-5;
    Eigen::VectorXd up = theta, dn = theta;
    up[k] += h;
    dn[k] -= h;
    const LogitEval eu = evaluate_logit_serial(d, rows, up, EvalLevel::Gradient);
    const LogitEval ed = evaluate_logit_serial(d, rows, dn, EvalLevel::Gradient);
    EXPECT_NEAR(e.gradient[k], (eu.nll - ed.nll) / (2 * h), 1e-5 * std::abs(e.gradient[k]) + 1e-6);
    const Eigen::VectorXd col = (eu.gradient - ed.gradient) / (2 * h);
    EXPECT_LT((e.hessian.col(k) - col).norm(), 1e-5 * e.hessian.norm());
  }
}

TEST(LogitKernels, EmptySituationOnlyCountsOutside) {
  LogitDesign d(2);
  d.add_situation({}, -1);
  const auto rows = all_rows(d);
  const LogitEval e = evaluate_logit_serial(d, rows, Eigen::VectorXd::Ones(2), EvalLevel::Gradient);
  EXPECT_EQ(e.nll, 0.0);
  EXPECT_THROW(d.add_situation(std::vector<double>{1.0}, 0), std::invalid_argument);
  EXPECT_THROW(d.add_situation(std::vector<double>{1.0, 2.0}, 1), std::invalid_argument);
}

TEST(FitLogitBox, RecoversAndRespectsBounds) {
  Rng rng(34);
  Eigen::VectorXd truth(3);
  truth << 0.8, -0.4, 0.0;
  const LogitDesign d = random_design(rng, 20000, 3, truth);
  const auto rows = all_rows(d);
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(3, -inf);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(3, inf);
  lo[1] = 0.0;  // truth sits outside: the fit must stop at the bound
  const BoxFitResult r = fit_logit_box(d, rows, lo, hi, Eigen::VectorXd::Zero(3), {});
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.theta[1], 0.0);
  EXPECT_NEAR(r.theta[0], 0.8, 0.06);
  const LogitEval e = evaluate_logit_serial(d, rows, r.theta, EvalLevel::Gradient);
  EXPECT_GT(e.gradient[1], 0.0);
  EXPECT_LT(projected_gradient(r.theta, e.gradient, lo, hi).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(FitLogitBox, StandardErrorsFromHessian) {
  Eigen::MatrixXd h(2, 2);
  h << 4.0, 0.0, 0.0, 25.0;
  const Eigen::VectorXd se = standard_errors(h);
  EXPECT_DOUBLE_EQ(se[0], 0.5);
  EXPECT_DOUBLE_EQ(se[1], 0.2);
}

}  // namespace
}  // namespace schedprice
