#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace schedprice {

/// Choice situations for a linear-in-parameters logit with an outside
/// option. Each situation holds one dense feature row per inside
/// alternative; the outside option has utility 0 and no row. Utility of an
/// inside alternative is row . theta.
class LogitDesign {
 public:
  explicit LogitDesign(std::size_t num_features) : p_(num_features) { offset_.push_back(0); }

  /// `rows` is k*num_features values for k inside alternatives. `chosen` is
  /// -1 for the outside option or a local index in [0, k).
  void add_situation(std::span<const double> rows, int chosen);

  std::size_t num_features() const { return p_; }
  std::size_t size() const { return chosen_.size(); }
  std::size_t num_alternatives(std::size_t n) const { return offset_[n + 1] - offset_[n]; }
  std::span<const double> rows(std::size_t n) const {
    return {x_.data() + offset_[n] * p_, num_alternatives(n) * p_};
  }
  int chosen(std::size_t n) const { return chosen_[n]; }

  void reserve(std::size_t situations, std::size_t alternatives_per_situation);

 private:
  std::size_t p_;
  std::vector<double> x_;
  std::vector<std::size_t> offset_;
  std::vector<int> chosen_;
};

enum class EvalLevel { Value, Gradient, Hessian };

/// Negative log-likelihood and (optionally) its gradient and Hessian.
struct LogitEval {
  double nll = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Row indices into a LogitDesign.
using RowSubset = std::span<const std::uint32_t>;

std::vector<std::uint32_t> all_rows(const LogitDesign& design);

/// Straight summation over the subset in order. Kept as the reference the
/// parallel kernel is tested and benchmarked against.
LogitEval evaluate_logit_serial(const LogitDesign& design, RowSubset rows,
                                const Eigen::VectorXd& theta, EvalLevel level);

/// OpenMP kernel. Rows are cut into fixed-size blocks independent of the
/// thread count and block partials are added in block order, so the result
/// is identical for any number of threads.
LogitEval evaluate_logit_parallel(const LogitDesign& design, RowSubset rows,
                                  const Eigen::VectorXd& theta, EvalLevel level);

/// Rows per reduction block in evaluate_logit_parallel.
inline constexpr std::size_t kLogitBlockRows = 512;

}  // namespace schedprice
