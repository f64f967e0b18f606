#include "schedprice/mst.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "schedprice/rng.hpp"

namespace schedprice {

std::vector<ChoiceObservation> TrainingSet::observations() const {
  std::vector<ChoiceObservation> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.obs);
  return out;
}

std::vector<std::uint32_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample fraction must be in (0, 1]");
  }
  if (n == 0) throw std::invalid_argument("subsample: empty data");
  const auto k = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  Rng rng(derive_seed(seed, 0x5ab5a3b1e));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

TrainingSet subsample(const TrainingSet& data, double fraction, std::uint64_t seed) {
  TrainingSet out;
  out.schema = data.schema;
  for (std::uint32_t i : subsample_indices(data.rows.size(), fraction, seed)) {
    out.rows.push_back(data.rows[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tree structure

SegmentationTree::SegmentationTree(FeatureSchema schema, std::vector<TreeNode> nodes,
                                   TreeHyperparams hyper, std::vector<double> construction_nll)
    : schema_(std::move(schema)),
      nodes_(std::move(nodes)),
      hyper_(std::move(hyper)),
      construction_nll_(std::move(construction_nll)) {
  if (nodes_.empty()) throw std::invalid_argument("tree needs a root");
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const TreeNode& n = nodes_[k];
    if (n.is_leaf) continue;
    const int sz = static_cast<int>(nodes_.size());
    if (n.left <= static_cast<int>(k) || n.right <= static_cast<int>(k) || n.left >= sz ||
        n.right >= sz) {
      throw std::invalid_argument("tree children must follow their parent");
    }
    if (n.rule.feature < 0 || n.rule.feature >= static_cast<int>(schema_.size())) {
      throw std::invalid_argument("split on unknown feature");
    }
  }
  index_leaves();
}

SegmentationTree SegmentationTree::single_leaf(FeatureSchema schema, MnlParams params) {
  TreeNode root;
  root.params = std::move(params);
  root.segment_id = 0;
  return SegmentationTree(std::move(schema), {root}, TreeHyperparams{});
}

void SegmentationTree::index_leaves() {
  leaf_nodes_.clear();
  // Depth-first, left before right.
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    TreeNode& n = nodes_[k];
    if (n.is_leaf) {
      n.segment_id = static_cast<int>(leaf_nodes_.size());
      leaf_nodes_.push_back(k);
    } else {
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
}

std::size_t SegmentationTree::num_leaves() const { return leaf_nodes_.size(); }

int SegmentationTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

int SegmentationTree::leaf_node(int segment_id) const {
  if (segment_id < 0 || segment_id >= static_cast<int>(leaf_nodes_.size())) {
    throw std::out_of_range("segment id " + std::to_string(segment_id));
  }
  return leaf_nodes_[segment_id];
}

const MnlParams& SegmentationTree::segment_params(int segment_id) const {
  return nodes_[leaf_node(segment_id)].params;
}

bool goes_left(const TreeNode& node, const FeatureVector& x) {
  const double v = x.values[node.rule.feature];
  if (node.rule.kind == FeatureKind::Numeric) {
    return FeatureVector::is_missing(v) || v <= node.rule.threshold;
  }
  if (FeatureVector::is_missing(v) || v < 0.0) return node.left_rows >= node.right_rows;
  return static_cast<int>(v) == node.rule.symbol;
}

int SegmentationTree::route_node(const FeatureVector& x) const {
  if (x.values.size() != schema_.size()) {
    throw std::invalid_argument("feature vector does not match tree schema");
  }
  int k = 0;
  while (!nodes_[k].is_leaf) k = goes_left(nodes_[k], x) ? nodes_[k].left : nodes_[k].right;
  return k;
}

RoutedSegment SegmentationTree::route(const FeatureVector& x) const {
  const TreeNode& leaf = nodes_[route_node(x)];
  return {leaf.segment_id, &leaf.params};
}

// ---------------------------------------------------------------------------
// Training

std::vector<SplitRule> candidate_splits(const TrainingSet& data,
                                        std::span<const std::uint32_t> rows, int max_thresholds) {
  std::vector<SplitRule> out;
  const std::size_t F = data.schema.size();
  std::vector<double> vals;
  for (std::size_t f = 0; f < F; ++f) {
    const FeatureSpec& spec = data.schema[f];
    vals.clear();
    for (std::uint32_t r : rows) {
      const double v = data.rows[r].x.values[f];
      if (!FeatureVector::is_missing(v) && !(spec.kind == FeatureKind::Categorical && v < 0.0)) {
        vals.push_back(v);
      }
    }
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    if (vals.size() < 2) continue;

    if (spec.kind == FeatureKind::Categorical) {
      for (double v : vals) {
        SplitRule rule;
        rule.feature = static_cast<int>(f);
        rule.kind = FeatureKind::Categorical;
        rule.symbol = static_cast<int>(v);
        out.push_back(rule);
      }
      continue;
    }
    const std::size_t n_mid = vals.size() - 1;
    const auto cap = static_cast<std::size_t>(std::max(1, max_thresholds));
    std::vector<std::size_t> picks;
    if (n_mid <= cap) {
      picks.resize(n_mid);
      std::iota(picks.begin(), picks.end(), std::size_t{0});
    } else {
      // Quantile-spaced midpoints.
      for (std::size_t q = 1; q <= cap; ++q) {
        const std::size_t m = (q * n_mid) / (cap + 1);
        if (picks.empty() || picks.back() != m) picks.push_back(m);
      }
    }
    for (std::size_t m : picks) {
      SplitRule rule;
      rule.feature = static_cast<int>(f);
      rule.kind = FeatureKind::Numeric;
      rule.threshold = 0.5 * (vals[m] + vals[m + 1]);
      out.push_back(rule);
    }
  }
  return out;
}

namespace {

struct Partition {
  std::vector<std::uint32_t> left, right;
  std::size_t known_left = 0, known_right = 0;
};

Partition partition(const TrainingSet& data, std::span<const std::uint32_t> rows,
                    const SplitRule& rule) {
  Partition p;
  std::vector<std::uint32_t> undecided;
  for (std::uint32_t r : rows) {
    const double v = data.rows[r].x.values[rule.feature];
    if (rule.kind == FeatureKind::Numeric) {
      (FeatureVector::is_missing(v) || v <= rule.threshold ? p.left : p.right).push_back(r);
    } else if (FeatureVector::is_missing(v) || v < 0.0) {
      undecided.push_back(r);
    } else {
      (static_cast<int>(v) == rule.symbol ? p.left : p.right).push_back(r);
    }
  }
  p.known_left = p.left.size();
  p.known_right = p.right.size();
  if (!undecided.empty()) {
    auto& dst = p.left.size() >= p.right.size() ? p.left : p.right;
    dst.insert(dst.end(), undecided.begin(), undecided.end());
    std::sort(dst.begin(), dst.end());
  }
  return p;
}

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& data, const TreeHyperparams& hyper, const BucketMap& buckets)
      : data_(data),
        hyper_(hyper),
        buckets_(buckets),
        observations_(data.observations()),
        design_(build_choice_design(observations_, buckets)) {
    full_ = hyper.leaf_fit;
    full_.warm_start.reset();
    candidate_ = full_;
    candidate_.grad_tol = hyper.candidate_tol;
    candidate_.max_iter = hyper.candidate_max_iter;
  }

  SegmentationTree build() {
    std::vector<std::uint32_t> root_rows(data_.rows.size());
    std::iota(root_rows.begin(), root_rows.end(), 0u);
    MnlFit root_fit = fit_mle_rows(design_, observations_, root_rows, buckets_, full_);
    nodes_.emplace_back();
    construction_.push_back(root_fit.nll);
    grow(0, std::move(root_rows), root_fit, 0);
    return SegmentationTree(data_.schema, std::move(nodes_), hyper_, std::move(construction_));
  }

 private:
  struct Evaluated {
    double gain = -std::numeric_limits<double>::infinity();
    bool valid = false;
  };

  void grow(int node_idx, std::vector<std::uint32_t> rows, const MnlFit& fit, int depth) {
    {
      TreeNode& node = nodes_[node_idx];
      node.depth = depth;
      node.rows = rows.size();
      node.train_nll = fit.nll;
      node.params = fit.params;
      node.is_leaf = true;
    }
    if (depth >= hyper_.max_depth || rows.size() < 2 * hyper_.min_leaf_samples) return;

    const std::vector<SplitRule> cands = candidate_splits(data_, rows, hyper_.max_thresholds);
    std::vector<Evaluated> eval(cands.size());
    const long nc = static_cast<long>(cands.size());
    MnlFitConfig cand_cfg = candidate_;
    cand_cfg.warm_start = fit.params;
    cand_cfg.parallel = false;

#pragma omp parallel for schedule(dynamic)
    for (long c = 0; c < nc; ++c) {
      const Partition p = partition(data_, rows, cands[c]);
      if (p.left.size() < hyper_.min_leaf_samples || p.right.size() < hyper_.min_leaf_samples) {
        continue;
      }
      try {
        const MnlFit l = fit_mle_rows(design_, observations_, p.left, buckets_, cand_cfg);
        const MnlFit r = fit_mle_rows(design_, observations_, p.right, buckets_, cand_cfg);
        eval[c].gain = fit.nll - (l.nll + r.nll);
        eval[c].valid = true;
      } catch (const UnidentifiableFitError&) {
        // Rejected candidate.
      }
    }

    // Best gain; ties resolved by candidate order so the result does not
    // depend on evaluation order.
    int best = -1;
    for (int c = 0; c < static_cast<int>(eval.size()); ++c) {
      if (!eval[c].valid || eval[c].gain < hyper_.min_split_gain) continue;
      if (best < 0 || eval[c].gain > eval[best].gain) best = c;
    }
    if (best < 0) return;

    const Partition p = partition(data_, rows, cands[best]);
    MnlFit left_fit, right_fit;
    try {
      left_fit = fit_mle_rows(design_, observations_, p.left, buckets_, full_);
      right_fit = fit_mle_rows(design_, observations_, p.right, buckets_, full_);
    } catch (const UnidentifiableFitError&) {
      return;
    }
    if (left_fit.nll + right_fit.nll > fit.nll - hyper_.min_split_gain) return;

    const int left_idx = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const int right_idx = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    {
      TreeNode& node = nodes_[node_idx];
      node.is_leaf = false;
      node.rule = cands[best];
      node.left = left_idx;
      node.right = right_idx;
      node.left_rows = p.known_left;
      node.right_rows = p.known_right;
    }
    construction_.push_back(construction_.back() - fit.nll + left_fit.nll + right_fit.nll);
    grow(left_idx, p.left, left_fit, depth + 1);
    grow(right_idx, p.right, right_fit, depth + 1);
  }

  const TrainingSet& data_;
  const TreeHyperparams& hyper_;
  const BucketMap& buckets_;
  std::vector<ChoiceObservation> observations_;
  LogitDesign design_;
  MnlFitConfig full_, candidate_;
  std::vector<TreeNode> nodes_;
  std::vector<double> construction_;
};

}  // namespace

SegmentationTree fit_tree(const TrainingSet& data, const TreeHyperparams& hyper,
                          const BucketMap& buckets) {
  if (data.rows.empty() || data.rows.size() < hyper.min_leaf_samples) {
    throw std::invalid_argument("fit_tree: fewer rows than min_leaf_samples");
  }
  if (hyper.max_depth < 0) throw std::invalid_argument("fit_tree: negative max_depth");
  for (const auto& r : data.rows) {
    if (r.x.values.size() != data.schema.size()) {
      throw std::invalid_argument("fit_tree: row does not match schema");
    }
  }
  TreeBuilder builder(data, hyper, buckets);
  return builder.build();
}

}  // namespace schedprice
