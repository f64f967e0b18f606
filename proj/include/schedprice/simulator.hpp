#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "schedprice/mst.hpp"
#include "schedprice/predictors.hpp"
#include "schedprice/pricer.hpp"
#include "schedprice/quote_log.hpp"
#include "schedprice/rng.hpp"
#include "schedprice/second_level.hpp"

namespace schedprice {

/// Sampling distribution of one quote feature.
struct FeatureGenerator {
  enum class Kind { Uniform, Normal, Categorical, Constant };

  std::string name;
  Kind kind = Kind::Constant;
  double a = 0.0;  // lo / mean / constant
  double b = 0.0;  // hi / sd
  std::vector<std::string> symbols;
  std::vector<double> weights;

  static FeatureGenerator uniform(std::string name, double lo, double hi);
  static FeatureGenerator normal(std::string name, double mean, double sd);
  static FeatureGenerator categorical(std::string name, std::vector<std::string> symbols,
                                      std::vector<double> weights);
  static FeatureGenerator constant(std::string name, double value);

  RawValue sample(Rng& rng) const;
  FeatureSpec spec() const;
};

struct WindowTruth {
  WindowCatalog catalog;
  WindowMnlParams params;
  /// Window cost = lead-time cost + offset_j; the smallest offset should be 0.
  std::vector<double> cost_offsets;
};

/// Planted marketplace.
struct GroundTruth {
  std::vector<FeatureGenerator> features;
  /// Segmentation over schema(); leaf parameters are the true MNLs.
  SegmentationTree tree;
  int num_options = 14;
  /// Independent per-option availability probability (at least one option
  /// is always offered).
  double availability = 1.0;
  CostTable costs;
  /// Keyed by the tree's segment ids.
  CancellationModel cancellation;
  std::optional<WindowTruth> windows;
  std::int64_t start_time = 1767225600;  // 2026-01-01T00:00:00Z
  std::int64_t quote_interval = 60;

  FeatureSchema schema() const;
};

/// Two-leaf tree splitting on `rule` at the root.
SegmentationTree planted_tree(const FeatureSchema& schema, const SplitRule& rule, MnlParams left,
                              MnlParams right);

/// Built-in scenarios:
///   "single"     one segment, reference effects, mild noise features
///   "segments"   two segments split on tier (beta 0.05 vs 0.20)
///   "reference"  two segments with strong reference effects and
///                option-dependent cancellation
/// `with_windows` adds a second level of 8 three-hour windows.
GroundTruth make_scenario(const std::string& name, int num_options, bool with_windows = false);

/// What a pricing policy sees for one quote.
struct QuoteContext {
  std::uint64_t index = 0;
  std::int64_t timestamp = 0;
  const RawFeatures* raw = nullptr;
  const FeatureVector* x = nullptr;
  const LeadTimeCalendar* calendar = nullptr;
  /// Expected costs, major units, already rounded to minor units.
  const std::vector<double>* costs = nullptr;
  /// Seed a randomized policy may use for this quote.
  std::uint64_t policy_seed = 0;
};

/// Returns one price per option in major units. Must be thread-safe when
/// quotes are generated in parallel.
using PricingFn = std::function<std::vector<double>(const QuoteContext&)>;
/// Window prices for lead time `lead_time` given its displayed price.
using WindowPricingFn = std::function<std::vector<double>(
    const QuoteContext&, int lead_time, double first_level_price, std::span<const double> costs)>;

/// c_i + U(lo, hi) per option, drawn from the quote's policy seed.
PricingFn random_markup_policy(double lo, double hi);
/// c_i + markup.
PricingFn fixed_markup_policy(double markup);

struct SimConfig {
  std::uint64_t seed = 1;
  bool parallel = true;
  /// Default prices every window at the lead time's displayed price.
  WindowPricingFn window_pricing;
  std::string id_prefix = "q";
  /// Quote indices start here (lets a second batch continue a log).
  std::uint64_t first_index = 0;
};

struct SimLog {
  std::vector<ChoiceRecord> records;
  std::uint64_t quotes = 0;
  std::uint64_t conversions = 0;
  std::uint64_t cancellations = 0;
};

/// Samples n quotes. Quote q draws everything from its own stream of
/// `config.seed`, so the log does not depend on config.parallel. Prices are
/// rounded to minor units before the customer sees them. Throws
/// std::invalid_argument if n == 0 or the policy returns a negative,
/// non-finite or wrongly sized price vector.
SimLog generate_quotes(const GroundTruth& truth, std::size_t n, const PricingFn& pricing,
                       const SimConfig& config);

/// Mean over rows of sum_i (P_i - 1{Y=i})^2. Throws std::invalid_argument
/// if a row does not sum to 1 within 1e-9 or an outcome is out of range.
double brier_score(std::span<const std::vector<double>> predicted, std::span<const int> outcomes);

/// Predicted distribution over {0, 1..L} for a training row.
using ChoicePredictor = std::function<std::vector<double>(const TrainingRow&)>;

struct NamedPredictor {
  std::string name;
  ChoicePredictor predict;
};

struct MetricsReport {
  std::string name;
  std::size_t rows = 0;
  /// Total negative log-likelihood over the rows.
  double nll = 0.0;
  double brier = 0.0;
  /// Observed conversion share per option 1..L.
  std::vector<double> conversion_rate;
};

/// Historical per-option conversion frequencies, renormalized over the
/// offered options of each quote.
class NaiveModel {
 public:
  static NaiveModel fit(const TrainingSet& data);
  std::vector<double> predict(const ChoiceObservation& obs) const;
  /// Share of rows choosing 0, 1, 2, ...
  const std::vector<double>& rates() const { return rates_; }

 private:
  std::vector<double> rates_;
  double floor_ = 0.0;
};

ChoicePredictor naive_predictor(NaiveModel model);
ChoicePredictor mnl_predictor(MnlParams params);
ChoicePredictor tree_predictor(SegmentationTree tree);

/// One report per predictor on the same rows. Throws std::invalid_argument
/// on an empty holdout.
std::vector<MetricsReport> evaluate_models(const TrainingSet& holdout,
                                           std::span<const NamedPredictor> models);

/// Converted and not canceled: (1 - alpha)(p - c) + alpha c of the chosen
/// option; otherwise 0.
double realized_objective(const ChoiceRecord& record, double alpha);

struct WelchTest {
  double difference = 0.0;  // mean(a) - mean(b)
  double std_error = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Throws std::invalid_argument if either sample has fewer than 2 values.
WelchTest welch_t_test(std::span<const double> a, std::span<const double> b);

struct ArmReport {
  std::size_t quotes = 0;
  double mean_objective = 0.0;
  double sd_objective = 0.0;
  double conversion_rate = 0.0;
  double cancel_rate = 0.0;
};

struct ABReport {
  ArmReport a;
  ArmReport b;
  WelchTest test;
};

/// Randomizes each quote into arm A with probability `split` and compares
/// realized objectives. Throws std::invalid_argument for split outside
/// (0, 1) or an empty arm.
ABReport ab_compare(const GroundTruth& truth, const PricingFn& policy_a, const PricingFn& policy_b,
                    std::size_t n, double split, double alpha, const SimConfig& config);

/// Legacy-style control: one logistic conversion curve per option,
/// sigmoid(a_i - b_i p), fit without substitution between options, and an
/// independent price search per option.
class LegacyModel {
 public:
  static LegacyModel fit(std::span<const ChoiceRecord> log, int num_options);
  /// argmax over a grid on [floor_i, ceiling_i] of (p - c_i) sigmoid(a_i - b_i p).
  std::vector<double> prices(std::span<const double> costs, const Guardrails& guardrails,
                             int grid_points = 201) const;
  const std::vector<double>& intercepts() const { return a_; }
  const std::vector<double>& slopes() const { return b_; }

 private:
  std::vector<double> a_;
  std::vector<double> b_;
};

PricingFn legacy_policy(LegacyModel model, Guardrails guardrails);

}  // namespace schedprice
