#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "schedprice/artifact.hpp"
#include "schedprice/simulator.hpp"

namespace schedprice {

/// POST /quote body. Money in minor units.
struct QuoteRequest {
  RawFeatures features;
  DayOfWeek start_day = DayOfWeek::Mon;
  int num_options = 0;
  /// Empty means every option is available.
  std::vector<bool> available;
  /// Per-option expected costs; empty means the artifact's cost table.
  std::vector<std::int64_t> costs;
  bool second_level = false;
  /// Per lead time, per window; empty means every window costs the lead
  /// time's cost.
  std::vector<std::vector<std::int64_t>> window_costs;
};

struct QuoteResponse {
  std::vector<std::int64_t> prices;
  int segment_id = -1;
  std::string model_version;
  PricingPolicy policy;
  /// Expected objective at the returned (rounded) prices.
  double objective = 0.0;
  /// Per lead time, per window; empty unless requested. Unavailable lead
  /// times get an empty list.
  std::vector<std::vector<std::int64_t>> window_prices;
};

/// Throws std::invalid_argument on malformed input.
QuoteRequest parse_quote_request(const std::string& json_text);
std::string to_json(const QuoteRequest& request);
std::string to_json(const QuoteResponse& response);
QuoteResponse parse_quote_response(const std::string& json_text);

class QuoteError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Read-only pricing over one artifact. quote() is safe to call from many
/// threads.
class QuoteEngine {
 public:
  /// With `memoize`, pricing results are cached by everything that can
  /// change them (segment, calendar, costs, cancellation probabilities).
  explicit QuoteEngine(std::shared_ptr<const ModelArtifact> artifact, bool memoize = false);

  /// Routes, costs, optimizes the two-parameter policy, applies guardrails
  /// and rounds to minor units; the second level, if requested, pins each
  /// lead time's cheapest-cost window at the displayed price. Throws
  /// QuoteError on requests the artifact cannot serve.
  QuoteResponse quote(const QuoteRequest& request) const;

  /// Simulator policy backed by quote().
  PricingFn policy() const;
  /// Simulator window policy backed by the window model.
  WindowPricingFn window_policy() const;

  const ModelArtifact& artifact() const { return *artifact_; }

 private:
  struct Priced {
    PricingPolicy policy;
    std::vector<double> prices;
  };

  std::shared_ptr<const ModelArtifact> artifact_;
  bool memoize_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, Priced> cache_;
};

}  // namespace schedprice
