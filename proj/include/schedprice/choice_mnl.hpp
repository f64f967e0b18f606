#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "schedprice/calendar.hpp"
#include "schedprice/logit_fit.hpp"
#include "schedprice/logit_kernels.hpp"

namespace schedprice {

/// Groups lead-time options into buckets that share price and
/// reference-price coefficients.
///
/// Bucketing can depend on the quote's calendar (weekday runs), so a
/// BucketMap is a rule; assign() turns it into a per-option bucket index for
/// one calendar.
class BucketMap {
 public:
  enum class Kind { Single, WeekdayRuns, ByIndex };

  /// Every option in bucket 0.
  static BucketMap single();
  /// Available-or-not, weekdays are numbered in calendar order; the first
  /// run_lengths[0] weekdays go to bucket 0, the next run_lengths[1] to
  /// bucket 1, and so on; remaining weekdays share the next bucket and all
  /// weekend options share the last one. {3, 3} gives the four buckets used
  /// for a 14-option horizon.
  static BucketMap weekday_runs(std::vector<int> run_lengths);
  /// Fixed bucket per 1-based option index (bucket_of[i-1]).
  static BucketMap by_index(std::vector<int> bucket_of);
  /// {3,3} weekday runs for L >= 14, weekday/weekend for 7 <= L < 14,
  /// single bucket below that.
  static BucketMap default_for(int num_options);

  Kind kind() const { return kind_; }
  int num_buckets() const { return num_buckets_; }
  const std::vector<int>& values() const { return values_; }

  std::vector<int> assign(const LeadTimeCalendar& calendar) const;
  void assign_into(const LeadTimeCalendar& calendar, std::span<int> out) const;

  friend bool operator==(const BucketMap&, const BucketMap&) = default;

 private:
  Kind kind_ = Kind::Single;
  std::vector<int> values_;  // run lengths or per-index buckets
  int num_buckets_ = 1;
};

/// Coefficients of one segment's reference-price MNL. Utility of offered
/// option i (1-based) is
///   alpha1 i + alpha2 i^2 + alpha3 sqrt(i) - beta_b p_i - gamma_b (p_i - r_i)
/// with b the option's bucket; the outside option has utility 0.
struct MnlParams {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;
  std::vector<double> beta;
  std::vector<double> gamma;
  BucketMap buckets = BucketMap::single();

  /// beta/gamma sized to the bucket count with the given values.
  static MnlParams uniform(const BucketMap& buckets, double beta, double gamma,
                           double alpha1 = 0.0, double alpha2 = 0.0, double alpha3 = 0.0);

  int num_buckets() const { return buckets.num_buckets(); }
  /// (alpha1, alpha2, alpha3, beta_0..beta_{B-1}, gamma_0..gamma_{B-1}).
  Eigen::VectorXd pack() const;
  static MnlParams unpack(const Eigen::VectorXd& theta, const BucketMap& buckets);
  static std::size_t num_parameters(const BucketMap& buckets) {
    return 3 + 2 * static_cast<std::size_t>(buckets.num_buckets());
  }

  friend bool operator==(const MnlParams&, const MnlParams&) = default;
};

/// One logged choice among lead-time options. The calendar's availability
/// is the offered set; `chosen` is 0 for no purchase or a 1-based option.
struct ChoiceObservation {
  LeadTimeCalendar calendar;
  std::vector<double> prices;
  std::vector<double> reference;
  int chosen = 0;

  /// Builds an observation with reference prices recomputed from `prices`.
  static ChoiceObservation from_prices(LeadTimeCalendar calendar, std::vector<double> prices,
                                       int chosen);
};

/// Deterministic utility per option (unavailable options get -infinity).
/// Throws std::invalid_argument on length mismatches.
std::vector<double> utilities(const MnlParams& params, std::span<const double> prices,
                              std::span<const double> reference, const LeadTimeCalendar& calendar);

/// Distribution over {0 (no purchase), 1..L}. Max-shifted softmax; zero on
/// unavailable options. Throws std::domain_error on a non-finite utility.
std::vector<double> choice_probabilities(const MnlParams& params, std::span<const double> prices,
                                         std::span<const double> reference,
                                         const LeadTimeCalendar& calendar);

/// Allocation-free form for inner loops: `out` has L+1 entries and
/// `bucket_scratch` at least L. No validation.
void choice_probabilities_into(const MnlParams& params, std::span<const double> prices,
                               std::span<const double> reference, const LeadTimeCalendar& calendar,
                               std::span<int> bucket_scratch, std::span<double> out);

/// -sum_n ln P(chosen_n). Throws std::invalid_argument on empty data or a
/// chosen option that was not offered.
double negative_log_likelihood(const MnlParams& params, std::span<const ChoiceObservation> data);

/// Analytic gradient of negative_log_likelihood in the pack() layout.
/// Reference prices are treated as data.
Eigen::VectorXd nll_gradient(const MnlParams& params, std::span<const ChoiceObservation> data);

/// Linear-logit design for a set of observations; one row per offered
/// option in pack() layout. Validates observations.
LogitDesign build_choice_design(std::span<const ChoiceObservation> data, const BucketMap& buckets);

/// Raised when the data cannot identify some bucket's price sensitivity.
class UnidentifiableFitError : public std::runtime_error {
 public:
  UnidentifiableFitError(const std::string& what, std::vector<int> buckets)
      : std::runtime_error(what), buckets_(std::move(buckets)) {}
  const std::vector<int>& buckets() const { return buckets_; }

 private:
  std::vector<int> buckets_;
};

struct MnlFitConfig {
  double grad_tol = 1e-6;
  int max_iter = 500;
  double beta_lower = 1e-4;
  /// false pins gamma at 0 (plain MNL without reference effects).
  bool reference_effects = true;
  bool parallel = true;
  /// Optional start point; zeros (beta at its bound) otherwise.
  std::optional<MnlParams> warm_start;
};

struct MnlFit {
  MnlParams params;
  MnlParams std_errors;
  double nll = 0.0;
  double projected_grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Checks the identifiability preconditions for `rows` of a design built
/// from `data` and throws UnidentifiableFitError listing offending buckets:
/// no purchases at all, or a bucket with no purchases or fewer than two
/// distinct offered prices.
void check_identifiable(std::span<const ChoiceObservation> data, std::span<const std::uint32_t> rows,
                        const BucketMap& buckets);

/// Maximum-likelihood fit with beta_b >= beta_lower and gamma_b >= 0.
MnlFit fit_mle(std::span<const ChoiceObservation> data, const BucketMap& buckets,
               const MnlFitConfig& config = {});

/// Same, on a row subset of a prebuilt design (used by the tree trainer).
MnlFit fit_mle_rows(const LogitDesign& design, std::span<const ChoiceObservation> data,
                    std::span<const std::uint32_t> rows, const BucketMap& buckets,
                    const MnlFitConfig& config);

}  // namespace schedprice
