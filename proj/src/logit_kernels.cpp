#include "schedprice/logit_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace schedprice {

void LogitDesign::add_situation(std::span<const double> rows, int chosen) {
  if (rows.size() % p_ != 0) throw std::invalid_argument("design rows not a multiple of P");
  const std::size_t k = rows.size() / p_;
  if (chosen < -1 || chosen >= static_cast<int>(k)) {
    throw std::invalid_argument("chosen alternative outside the situation");
  }
  x_.insert(x_.end(), rows.begin(), rows.end());
  offset_.push_back(offset_.back() + k);
  chosen_.push_back(chosen);
}

void LogitDesign::reserve(std::size_t situations, std::size_t alternatives_per_situation) {
  x_.reserve(situations * alternatives_per_situation * p_);
  offset_.reserve(situations + 1);
  chosen_.reserve(situations);
}

std::vector<std::uint32_t> all_rows(const LogitDesign& design) {
  std::vector<std::uint32_t> idx(design.size());
  std::iota(idx.begin(), idx.end(), 0u);
  return idx;
}

namespace {

// Accumulates one block of situations into (nll, g, H upper triangle).
// `scratch` holds utilities/probabilities and the expected feature vector.
void accumulate(const LogitDesign& design, RowSubset rows, std::size_t begin, std::size_t end,
                const double* theta, EvalLevel level, double& nll, double* g, double* h,
                std::vector<double>& scratch) {
  const std::size_t P = design.num_features();
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t n = rows[r];
    const std::span<const double> x = design.rows(n);
    const std::size_t k = design.num_alternatives(n);
    if (scratch.size() < k + P) scratch.resize(k + P);
    double* u = scratch.data();
    double* xbar = scratch.data() + k;

    const int c = design.chosen(n);
    double umax = 0.0;  // outside option
    double u_c = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      const double* xa = x.data() + a * P;
      double s = 0.0;
      for (std::size_t j = 0; j < P; ++j) s += xa[j] * theta[j];
      u[a] = s;
      if (static_cast<int>(a) == c) u_c = s;
      umax = std::max(umax, s);
    }
    double denom = std::exp(-umax);
    for (std::size_t a = 0; a < k; ++a) {
      u[a] = std::exp(u[a] - umax);
      denom += u[a];
    }
    // -log P(c) = log(sum e^u) - u_c, with u_outside = 0.
    nll += umax + std::log(denom) - u_c;
    if (level == EvalLevel::Value) continue;

    const double inv = 1.0 / denom;
    std::fill(xbar, xbar + P, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
      u[a] *= inv;  // probability
      const double* xa = x.data() + a * P;
      for (std::size_t j = 0; j < P; ++j) xbar[j] += u[a] * xa[j];
    }
    for (std::size_t j = 0; j < P; ++j) g[j] += xbar[j];
    if (c >= 0) {
      const double* xc = x.data() + static_cast<std::size_t>(c) * P;
      for (std::size_t j = 0; j < P; ++j) g[j] -= xc[j];
    }
    if (level != EvalLevel::Hessian) continue;

    for (std::size_t a = 0; a < k; ++a) {
      const double* xa = x.data() + a * P;
      const double pa = u[a];
      if (pa == 0.0) continue;
      for (std::size_t i = 0; i < P; ++i) {
        const double w = pa * xa[i];
        if (w == 0.0) continue;
        double* hi = h + i * P;
        for (std::size_t j = i; j < P; ++j) hi[j] += w * xa[j];
      }
    }
    for (std::size_t i = 0; i < P; ++i) {
      double* hi = h + i * P;
      for (std::size_t j = i; j < P; ++j) hi[j] -= xbar[i] * xbar[j];
    }
  }
}

LogitEval finish(std::size_t P, double nll, const double* g, const double* h, EvalLevel level) {
  LogitEval out;
  out.nll = nll;
  if (level != EvalLevel::Value) {
    out.gradient = Eigen::Map<const Eigen::VectorXd>(g, static_cast<Eigen::Index>(P));
  }
  if (level == EvalLevel::Hessian) {
    out.hessian.resize(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t j = i; j < P; ++j) {
        out.hessian(i, j) = h[i * P + j];
        out.hessian(j, i) = h[i * P + j];
      }
    }
  }
  return out;
}

void check_theta(const LogitDesign& design, const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != design.num_features()) {
    throw std::invalid_argument("parameter vector length does not match design");
  }
}

}  // namespace

LogitEval evaluate_logit_serial(const LogitDesign& design, RowSubset rows,
                                const Eigen::VectorXd& theta, EvalLevel level) {
  check_theta(design, theta);
  const std::size_t P = design.num_features();
  std::vector<double> g(P, 0.0), h(P * P, 0.0), scratch;
  double nll = 0.0;
  accumulate(design, rows, 0, rows.size(), theta.data(), level, nll, g.data(), h.data(), scratch);
  return finish(P, nll, g.data(), h.data(), level);
}

LogitEval evaluate_logit_parallel(const LogitDesign& design, RowSubset rows,
                                  const Eigen::VectorXd& theta, EvalLevel level) {
  check_theta(design, theta);
  const std::size_t P = design.num_features();
  const std::size_t n_blocks = (rows.size() + kLogitBlockRows - 1) / kLogitBlockRows;
  const std::size_t stride = 1 + P + P * P;
  std::vector<double> partial(n_blocks * stride, 0.0);

  const long nb = static_cast<long>(n_blocks);
#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (long b = 0; b < nb; ++b) {
      double* slot = partial.data() + static_cast<std::size_t>(b) * stride;
      const std::size_t begin = static_cast<std::size_t>(b) * kLogitBlockRows;
      const std::size_t end = std::min(rows.size(), begin + kLogitBlockRows);
      accumulate(design, rows, begin, end, theta.data(), level, slot[0], slot + 1, slot + 1 + P,
                 scratch);
    }
  }

  std::vector<double> total(stride, 0.0);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const double* slot = partial.data() + b * stride;
    const std::size_t used = level == EvalLevel::Hessian ? stride
                             : level == EvalLevel::Gradient ? 1 + P
                                                            : 1;
    for (std::size_t j = 0; j < used; ++j) total[j] += slot[j];
  }
  return finish(P, total[0], total.data() + 1, total.data() + 1 + P, level);
}

}  // namespace schedprice
