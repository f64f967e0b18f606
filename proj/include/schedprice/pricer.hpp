#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "schedprice/calendar.hpp"
#include "schedprice/choice_mnl.hpp"

namespace schedprice {

/// How reference prices enter an objective evaluation.
enum class ReferenceMode {
  /// Recomputed from the evaluated prices on every call.
  Recompute,
  /// Frozen at the unclipped cost-plus prices c_i + 1/(beta_b + gamma_b).
  FrozenAtCostPlus,
};

/// Generalized objective weight per converted option:
///   w_i = (1 - alpha)(p_i - c_i) + alpha c_i
/// alpha = 0 is expected profit, 0.5 is half the expected revenue and 1 is
/// cost-weighted conversion.
struct ObjectiveConfig {
  double alpha = 0.0;
  bool include_cancellation = true;
  ReferenceMode reference = ReferenceMode::Recompute;

  friend bool operator==(const ObjectiveConfig&, const ObjectiveConfig&) = default;
};

/// Per-option price floor and ceiling.
struct Guardrails {
  std::vector<double> floor;
  std::vector<double> ceiling;

  static Guardrails uniform(int num_options, double floor, double ceiling);
  /// Throws std::invalid_argument unless both vectors have `num_options`
  /// entries and 0 <= floor <= ceiling.
  void validate(int num_options) const;
  double max_ceiling() const;

  friend bool operator==(const Guardrails&, const Guardrails&) = default;
};

struct PricingPolicy {
  double m1 = 0.0;  // minimum price
  double m2 = 0.0;  // markup over cost + 1/(beta + gamma)

  friend bool operator==(const PricingPolicy&, const PricingPolicy&) = default;
};

/// p_i = clip(max{m1, c_i + 1/(beta_b + gamma_b) + m2}, floor_i, ceiling_i)
/// with b the bucket of option i. Throws std::invalid_argument on size
/// mismatches or a non-positive beta_b + gamma_b.
std::vector<double> policy_prices(const PricingPolicy& policy, std::span<const double> costs,
                                  const MnlParams& params, const LeadTimeCalendar& calendar,
                                  const Guardrails& guardrails);

/// Expected objective of a price vector for one quote. Holds scratch
/// buffers, so one instance must not be shared between threads; copies are
/// cheap and independent.
class ObjectiveEvaluator {
 public:
  /// `cancel_probs` holds P(Z=1 | x, i) for i = 1..L; it is ignored when
  /// config.include_cancellation is false. Throws std::invalid_argument on
  /// size mismatches or non-finite inputs.
  ObjectiveEvaluator(MnlParams params, std::vector<double> costs, std::vector<double> cancel_probs,
                     LeadTimeCalendar calendar, ObjectiveConfig config);

  /// sum_i P(Y=i) w_i (1 - q_i). Throws std::invalid_argument on a
  /// non-finite or wrong-length price vector.
  double operator()(std::span<const double> prices);

  const MnlParams& params() const { return params_; }
  const std::vector<double>& costs() const { return costs_; }
  const LeadTimeCalendar& calendar() const { return calendar_; }
  const ObjectiveConfig& config() const { return config_; }
  int num_options() const { return calendar_.num_options(); }

 private:
  MnlParams params_;
  std::vector<double> costs_;
  std::vector<double> execute_;
  LeadTimeCalendar calendar_;
  ObjectiveConfig config_;
  std::vector<double> frozen_reference_;
  std::vector<double> reference_;
  std::vector<double> probs_;
  std::vector<int> buckets_;
};

/// One-shot form of ObjectiveEvaluator.
double evaluate_objective(std::span<const double> prices, const MnlParams& params,
                          std::span<const double> costs, std::span<const double> cancel_probs,
                          const LeadTimeCalendar& calendar, const ObjectiveConfig& config);

/// Grid over (m1, m2). Unset ranges default to m1 in [0, max ceiling] and
/// m2 in [-1/min(beta + gamma), max ceiling].
struct GridConfig {
  int m1_points = 41;
  int m2_points = 41;
  std::optional<std::pair<double, double>> m1_range;
  std::optional<std::pair<double, double>> m2_range;
  /// One local pass around the incumbent at refine_factor times the
  /// resolution, covering +-refine_halfwidth coarse steps.
  bool refine = true;
  int refine_factor = 4;
  int refine_halfwidth = 5;
  bool parallel = true;

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct PricingResult {
  PricingPolicy policy;
  std::vector<double> prices;
  double objective = 0.0;
  int evaluations = 0;
};

/// Exhaustive grid search over the two-parameter policy. Ties go to the
/// lexicographically smallest (m1, m2). The result does not depend on
/// GridConfig::parallel. Throws std::invalid_argument on an empty grid.
PricingResult optimize_two_param(const ObjectiveEvaluator& objective, const Guardrails& guardrails,
                                 const GridConfig& grid = {});

}  // namespace schedprice
