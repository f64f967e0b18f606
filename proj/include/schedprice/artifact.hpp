#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "schedprice/mst.hpp"
#include "schedprice/predictors.hpp"
#include "schedprice/pricer.hpp"
#include "schedprice/quote_log.hpp"
#include "schedprice/second_level.hpp"

namespace schedprice {

inline constexpr int kArtifactSchemaVersion = 1;

/// Everything needed to serve quotes, as written by `train`.
struct ModelArtifact {
  int schema_version = kArtifactSchemaVersion;
  /// Hash of the artifact content; changes whenever anything else does.
  std::string model_version;
  /// Newest quote in the training data (not wall-clock time).
  std::int64_t trained_at = 0;
  std::int64_t window_start = 0;
  std::int64_t window_end = 0;
  int window_weeks = 8;
  double subsample_fraction = 0.5;
  std::uint64_t seed = 0;
  int num_options = 0;
  BucketMap buckets;
  SegmentationTree tree;
  CancellationModel cancellation;
  CostTable costs;
  std::optional<WindowCatalog> window_catalog;
  std::optional<WindowMnlParams> window_model;
  Guardrails guardrails;
  ObjectiveConfig objective;
  GridConfig grid;

  friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

class ArtifactVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Self-describing JSON with sorted keys; doubles round-trip exactly.
/// model_version is recomputed from the content.
std::string serialize(const ModelArtifact& artifact);
/// Throws ArtifactVersionError on a schema_version or model_version
/// mismatch and std::invalid_argument on malformed content.
ModelArtifact parse_artifact(const std::string& text);

/// Writes to a temporary file in the same directory, then renames.
void save_artifact(const std::string& path, const ModelArtifact& artifact);
ModelArtifact load_artifact(const std::string& path);

struct TrainConfig {
  int window_weeks = 8;
  double subsample = 0.5;
  std::uint64_t seed = 1;
  /// End of the training window; defaults to the newest record.
  std::optional<std::int64_t> as_of;
  TreeHyperparams tree;
  /// Defaults to BucketMap::default_for(L).
  std::optional<BucketMap> buckets;
  CancelFitConfig cancel;
  std::size_t cancel_min_segment_rows = 500;
  /// Empty (no curves, no fallback) means: per-option mean of the logged
  /// cost estimates.
  CostTable costs;
  /// Empty means floor 0 and ceiling twice the highest logged price.
  Guardrails guardrails;
  ObjectiveConfig objective;
  GridConfig grid;
  bool second_level = true;
};

struct TrainReport {
  std::size_t rows_in_window = 0;
  std::size_t rows_used = 0;
  std::size_t leaves = 0;
  std::size_t window_rows = 0;
  std::size_t imputed_rows = 0;
  std::uint64_t imputation_dropped = 0;
  std::vector<std::string> warnings;
};

struct TrainResult {
  ModelArtifact artifact;
  TrainReport report;
};

/// Windows, subsamples and fits. A pure function of (records, config).
/// Throws std::invalid_argument when fewer than min_leaf_samples rows fall
/// in the window.
TrainResult train(std::span<const ChoiceRecord> records, const TrainConfig& config);

/// Reads {"floor": [...], "ceiling": [...]} in minor units.
Guardrails parse_guardrails(const std::string& json_text);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace schedprice
