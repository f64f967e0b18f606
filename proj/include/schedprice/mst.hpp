#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "schedprice/choice_mnl.hpp"
#include "schedprice/features.hpp"

namespace schedprice {

struct TrainingRow {
  FeatureVector x;
  ChoiceObservation obs;
  std::int64_t timestamp = 0;  // unix seconds, UTC
  bool canceled = false;
};

struct TrainingSet {
  FeatureSchema schema;
  std::vector<TrainingRow> rows;

  std::vector<ChoiceObservation> observations() const;
};

/// Uniform sample without replacement of ceil(fraction * N) rows, kept in
/// their original order. Deterministic given the seed. Throws
/// std::invalid_argument for fraction outside (0, 1] or empty data.
TrainingSet subsample(const TrainingSet& data, double fraction, std::uint64_t seed);
/// The selected row indices, ascending.
std::vector<std::uint32_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed);

struct TreeHyperparams {
  int max_depth = 3;
  std::size_t min_leaf_samples = 100;
  /// Required NLL improvement (nats) for a split to be accepted.
  double min_split_gain = 2.0;
  /// Numeric candidate thresholds per feature and node.
  int max_thresholds = 64;
  /// Looser fit used only to rank candidate splits.
  double candidate_tol = 1e-4;
  int candidate_max_iter = 100;
  MnlFitConfig leaf_fit;

  friend bool operator==(const TreeHyperparams& a, const TreeHyperparams& b) {
    return a.max_depth == b.max_depth && a.min_leaf_samples == b.min_leaf_samples &&
           a.min_split_gain == b.min_split_gain && a.max_thresholds == b.max_thresholds &&
           a.candidate_tol == b.candidate_tol && a.candidate_max_iter == b.candidate_max_iter &&
           a.leaf_fit.reference_effects == b.leaf_fit.reference_effects;
  }
};

/// Numeric: x <= threshold goes left (missing goes left). Categorical:
/// x == symbol goes left; unknown or missing symbols follow the branch that
/// received more training rows.
struct SplitRule {
  int feature = -1;
  FeatureKind kind = FeatureKind::Numeric;
  double threshold = 0.0;
  int symbol = -1;

  friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

struct TreeNode {
  bool is_leaf = true;
  int depth = 0;
  std::size_t rows = 0;
  /// Training NLL of this node's own (full-tolerance) MNL fit.
  double train_nll = 0.0;
  MnlParams params;

  // Internal nodes.
  SplitRule rule;
  int left = -1;
  int right = -1;
  std::size_t left_rows = 0;
  std::size_t right_rows = 0;

  // Leaves.
  int segment_id = -1;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RoutedSegment {
  int segment_id;
  const MnlParams* params;
};

/// Binary tree over quote features with a reference-price MNL in every
/// leaf. Node 0 is the root. Leaves are numbered 0..K-1 in depth-first
/// (left before right) order.
class SegmentationTree {
 public:
  SegmentationTree() = default;
  SegmentationTree(FeatureSchema schema, std::vector<TreeNode> nodes, TreeHyperparams hyper,
                   std::vector<double> construction_nll = {});

  /// Single-leaf tree with the given parameters.
  static SegmentationTree single_leaf(FeatureSchema schema, MnlParams params);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeHyperparams& hyperparams() const { return hyper_; }
  /// Total training NLL after 0, 1, 2, ... accepted splits.
  const std::vector<double>& construction_nll() const { return construction_nll_; }

  std::size_t num_leaves() const;
  int depth() const;
  /// Node index of leaf segment k.
  int leaf_node(int segment_id) const;
  const MnlParams& segment_params(int segment_id) const;

  /// Walks from the root; never throws for missing or unknown values.
  RoutedSegment route(const FeatureVector& x) const;
  int route_node(const FeatureVector& x) const;

  friend bool operator==(const SegmentationTree&, const SegmentationTree&) = default;

 private:
  void index_leaves();

  FeatureSchema schema_;
  std::vector<TreeNode> nodes_;
  TreeHyperparams hyper_;
  std::vector<double> construction_nll_;
  std::vector<int> leaf_nodes_;
};

/// True if `x` goes left at `node` under SplitRule conventions.
bool goes_left(const TreeNode& node, const FeatureVector& x);

/// Greedy top-down trainer. A split is kept only if both children have at
/// least min_leaf_samples rows and the children's NLL sum is at least
/// min_split_gain below the parent's. Throws UnidentifiableFitError if the
/// root itself cannot be fit and std::invalid_argument if N <
/// min_leaf_samples.
SegmentationTree fit_tree(const TrainingSet& data, const TreeHyperparams& hyper,
                          const BucketMap& buckets);

/// Candidate split rules for the given rows, in evaluation order: numeric
/// midpoints between consecutive distinct values (at most max_thresholds,
/// quantile-spaced), then one-vs-rest per categorical symbol present.
std::vector<SplitRule> candidate_splits(const TrainingSet& data,
                                        std::span<const std::uint32_t> rows, int max_thresholds);

}  // namespace schedprice
