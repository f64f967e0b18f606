#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "schedprice/calendar.hpp"
#include "schedprice/features.hpp"

namespace schedprice {

class SegmentationTree;

/// Expected cost per lead-time option, looked up by the values of a few key
/// features. Each table row is a per-lead-time cost curve (option 1 first).
///
/// CSV layout: a header naming the key features followed by cost_1..cost_K,
/// then one row per key. A row whose keys are all "*" is the fallback.
/// Costs are in minor currency units; the table stores major units.
class CostTable {
 public:
  CostTable() = default;
  CostTable(std::vector<std::string> key_features, std::vector<double> fallback_curve);

  /// Every option costs `cost` for every key.
  static CostTable constant(int num_options, double cost);
  static CostTable from_csv(const std::string& text);
  std::string to_csv() const;

  void add_curve(std::vector<std::string> key_values, std::vector<double> curve);

  const std::vector<std::string>& key_features() const { return key_features_; }
  const std::map<std::vector<std::string>, std::vector<double>>& curves() const { return curves_; }
  const std::vector<double>& fallback_curve() const { return fallback_; }

  /// Costs for options 1..L of the calendar. An unknown key falls back to
  /// the fallback curve and increments unknown_key_count(). Throws
  /// std::invalid_argument if the matching curve is shorter than L.
  std::vector<double> expected_costs(const RawFeatures& x, const LeadTimeCalendar& calendar) const;

  std::uint64_t unknown_key_count() const { return unknown_keys_->load(); }

  friend bool operator==(const CostTable& a, const CostTable& b) {
    return a.key_features_ == b.key_features_ && a.curves_ == b.curves_ && a.fallback_ == b.fallback_;
  }

 private:
  std::vector<std::string> key_of(const RawFeatures& x) const;

  std::vector<std::string> key_features_;
  std::map<std::vector<std::string>, std::vector<double>> curves_;
  std::vector<double> fallback_;
  std::shared_ptr<std::atomic<std::uint64_t>> unknown_keys_ =
      std::make_shared<std::atomic<std::uint64_t>>(0);
};

enum class OptionEncoding { None, Linear, OneHot };

/// Logistic cancellation coefficients for one segment:
///   logit P(Z=1 | x, i) = intercept + option term + numeric_effect . x_num
/// where the option term is option_effect[0] * i (Linear) or
/// option_effect[i-1] (OneHot, option 1 is the baseline at 0).
struct LogisticCoefficients {
  /// When set the model is a constant and everything else is ignored.
  std::optional<double> constant_rate;
  double intercept = 0.0;
  OptionEncoding encoding = OptionEncoding::None;
  std::vector<double> option_effect;
  /// Per numeric feature in schema order; empty means unused.
  std::vector<double> numeric_effect;

  double probability(std::span<const double> numeric_x, int option) const;

  friend bool operator==(const LogisticCoefficients&, const LogisticCoefficients&) = default;
};

struct CancellationRow {
  FeatureVector x;
  int option = 1;  // chosen lead time, 1-based
  bool canceled = false;
};

struct CancelFitConfig {
  double l2 = 1e-4;
  OptionEncoding encoding = OptionEncoding::OneHot;
  bool use_numeric_features = true;
  int max_iter = 100;
  double grad_tol = 1e-8;
};

struct CancelFit {
  LogisticCoefficients coefficients;
  /// Standard errors in the same layout (intercept, option, numeric).
  LogisticCoefficients std_errors;
  bool converged = false;
};

/// Ridge-penalized logistic MLE (intercept unpenalized). Single-class data
/// gives a constant model at the empirical rate clipped to [1e-4, 1-1e-4].
/// Throws std::invalid_argument on empty data.
CancelFit fit_cancellation(std::span<const CancellationRow> rows, const FeatureSchema& schema,
                           int num_options, const CancelFitConfig& config = {});

/// Per-segment logistic models with a global fallback.
class CancellationModel {
 public:
  CancellationModel() = default;
  CancellationModel(FeatureSchema schema, LogisticCoefficients global,
                    std::map<int, LogisticCoefficients> by_segment = {});

  static CancellationModel constant(double rate);

  /// P(Z=1 | x, chosen option), in [0, 1]. Uses the segment's model when one
  /// was fit, else the global one. Independent of prices.
  double cancel_probability(const FeatureVector& x, int option, int segment_id = -1) const;
  /// 1 - cancel_probability.
  double execute_probability(const FeatureVector& x, int option, int segment_id = -1) const;

  /// Cancel probabilities for options 1..L.
  std::vector<double> cancel_probabilities(const FeatureVector& x, int num_options,
                                           int segment_id = -1) const;

  const FeatureSchema& schema() const { return schema_; }
  const LogisticCoefficients& global() const { return global_; }
  const std::map<int, LogisticCoefficients>& by_segment() const { return by_segment_; }

  friend bool operator==(const CancellationModel&, const CancellationModel&) = default;

 private:
  FeatureSchema schema_;
  LogisticCoefficients global_ = [] {
    LogisticCoefficients c;
    c.constant_rate = 0.0;
    return c;
  }();
  std::map<int, LogisticCoefficients> by_segment_;
};

/// Global model plus one model per tree segment with at least
/// min_segment_rows rows.
CancellationModel fit_cancellation_model(const SegmentationTree& tree,
                                         std::span<const CancellationRow> rows, int num_options,
                                         std::size_t min_segment_rows,
                                         const CancelFitConfig& config = {});

}  // namespace schedprice
