#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "schedprice/choice_mnl.hpp"

namespace schedprice {

struct TimeWindow {
  int start_hour = 0;
  int length_hours = 24;

  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// Time windows within a service day, ordered by start hour. Window j
/// (1-based) is the j-th in that order.
class WindowCatalog {
 public:
  WindowCatalog() = default;
  /// Windows must lie within [0, 24), not overlap and be non-empty.
  explicit WindowCatalog(std::vector<TimeWindow> windows);
  /// 24 / length_hours equal windows; length_hours in {2, 3, 4, 6}.
  static WindowCatalog uniform(int length_hours);

  int size() const { return static_cast<int>(windows_.size()); }
  const std::vector<TimeWindow>& windows() const { return windows_; }

  friend bool operator==(const WindowCatalog&, const WindowCatalog&) = default;

 private:
  std::vector<TimeWindow> windows_;
};

/// Window-choice MNL given the clicked lead time i:
///   V_ij = alpha_j - beta p_ij + gamma . x_i + delta j,  outside option 0.
/// alpha carries no linear trend in j (sum_j (j - mean j) alpha_j = 0), which
/// separates it from delta.
struct WindowMnlParams {
  std::vector<double> alpha;
  double beta = 0.0;
  std::vector<double> gamma;
  double delta = 0.0;

  int num_windows() const { return static_cast<int>(alpha.size()); }

  friend bool operator==(const WindowMnlParams&, const WindowMnlParams&) = default;
};

/// Window features for a clicked lead time: the quote's numeric features
/// followed by the lead time itself.
std::vector<double> window_features(std::span<const double> numeric_x, int lead_time);

struct SecondLevelObservation {
  std::vector<double> x;
  std::vector<double> prices;
  /// 0 = no purchase, else 1-based window.
  int chosen_window = 0;
  bool imputed = false;
};

/// Distribution over {0 (no purchase), 1..M}. Throws std::invalid_argument
/// on size mismatches or negative prices and std::domain_error on a
/// non-finite utility.
std::vector<double> window_probabilities(const WindowMnlParams& params, std::span<const double> x,
                                         std::span<const double> prices);

/// An unconverted quote whose clicked lead time was not recorded.
struct UnconvertedQuote {
  std::vector<double> numeric_x;
  /// First-level distribution over {0, 1..L} from the routed segment.
  std::vector<double> first_level_probs;
  /// Window prices per lead time (index i-1); an empty entry means the
  /// quote's log has no windows for that lead time.
  std::vector<std::vector<double>> window_prices;
};

struct ImputeResult {
  std::vector<SecondLevelObservation> rows;
  /// Source quote index of each imputed row.
  std::vector<std::size_t> source;
  std::uint64_t dropped_no_purchase_mass = 0;
  std::uint64_t dropped_missing_windows = 0;
};

/// Samples a clicked lead time i with probability P(Y1=i)/(1-P(Y1=0)) for
/// every quote and emits a no-purchase window observation. Quotes with no
/// purchase mass, or whose sampled lead time has no logged windows, are
/// dropped and counted. Deterministic given the seed.
ImputeResult impute_clicks(std::span<const UnconvertedQuote> quotes, std::uint64_t seed);

struct WindowFitConfig {
  double grad_tol = 1e-6;
  int max_iter = 500;
  double beta_lower = 1e-4;
  bool parallel = true;
};

struct WindowFit {
  WindowMnlParams params;
  double nll = 0.0;
  double projected_grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Convex MLE with beta >= beta_lower. Per-window constants c_j are fit
/// freely and then split into delta (least-squares slope of c_j on j) and
/// trend-free alpha_j = c_j - delta j. Throws UnidentifiableFitError on no
/// purchases or no price variation, std::invalid_argument on bad shapes.
WindowFit fit_window_model(std::span<const SecondLevelObservation> rows, int num_windows,
                           const WindowFitConfig& config = {});

/// -sum ln P(chosen window).
double window_nll(const WindowMnlParams& params, std::span<const SecondLevelObservation> rows);

struct WindowGridConfig {
  int points = 101;
  bool refine = true;
  /// Refinement covers +-1 coarse step with this many points.
  int refine_points = 21;
};

struct WindowPricing {
  std::vector<double> prices;
  double markup = 0.0;
  /// Conditional second-level expected margin at `prices`.
  double objective = 0.0;
};

/// Prices the windows of a clicked lead time. The lowest-cost window (first
/// one on ties) is priced exactly `first_level_price`; every other window
/// gets max{first_level_price, min{c_j + m3, ceiling}} with m3 searched on
/// [0, ceiling - min cost]. Ties go to the smallest m3. Throws
/// std::invalid_argument on an empty or mismatched window set.
WindowPricing price_windows(double first_level_price, std::span<const double> window_costs,
                            const WindowMnlParams& params, std::span<const double> x,
                            double ceiling, const WindowGridConfig& grid = {});

/// Conditional expected margin sum_j (p_j - c_j) P(Y2=j) with the outside
/// option at zero price and cost.
double window_objective(const WindowMnlParams& params, std::span<const double> x,
                        std::span<const double> prices, std::span<const double> costs);

/// Purchase-renormalized weights P(Y1=i)/(1-P(Y1=0)) for i = 1..L. Throws
/// std::domain_error when P(Y1=0) = 1.
std::vector<double> purchase_weights(std::span<const double> first_level_probs);

/// sum_i w_i sum_{j=0..M} (p_ij - c_ij) P(Y2=j | x_i), with w_i from
/// purchase_weights and x_i = window_features(numeric_x, i). Lead times with
/// zero weight are skipped. `prices[i-1]` and `costs[i-1]` are the window
/// vectors of lead time i.
double combined_objective(std::span<const double> first_level_probs,
                          std::span<const double> numeric_x, const WindowMnlParams& params,
                          std::span<const std::vector<double>> prices,
                          std::span<const std::vector<double>> costs);

}  // namespace schedprice
