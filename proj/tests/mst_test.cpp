#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "schedprice/mst.hpp"
#include "schedprice/simulator.hpp"
#include "test_util.hpp"

namespace schedprice {
namespace {

TrainingSet scenario_rows(const std::string& name, int L, std::size_t n, std::uint64_t seed) {
  const GroundTruth truth = make_scenario(name, L);
  SimConfig cfg;
  cfg.seed = seed;
  const SimLog log = generate_quotes(truth, n, random_markup_policy(1.0, 25.0), cfg);
  return to_training_set(log.records, truth.schema());
}

// Routing oracle: recursive walk written against the node list only.
int route_oracle(const std::vector<TreeNode>& nodes, int at, const FeatureVector& x,
                 const FeatureSchema& schema) {
  const TreeNode& n = nodes[at];
  if (n.is_leaf) return at;
  const double v = x.values[n.rule.feature];
  bool left;
  if (schema[n.rule.feature].kind == FeatureKind::Numeric) {
    left = std::isnan(v) || v <= n.rule.threshold;
  } else if (std::isnan(v) || v < 0) {
    left = n.left_rows >= n.right_rows;
  } else {
    left = static_cast<int>(v) == n.rule.symbol;
  }
  return route_oracle(nodes, left ? n.left : n.right, x, schema);
}

TEST(Subsample, SizeOrderAndDeterminism) {
  const auto a = subsample_indices(1001, 0.5, 7);
  EXPECT_EQ(a.size(), 501u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::uint32_t>(a.begin(), a.end()).size(), a.size());
  EXPECT_EQ(a, subsample_indices(1001, 0.5, 7));
  EXPECT_NE(a, subsample_indices(1001, 0.5, 8));
  EXPECT_EQ(subsample_indices(10, 1.0, 1).size(), 10u);
  EXPECT_THROW(subsample_indices(10, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(subsample_indices(10, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(subsample_indices(0, 0.5, 1), std::invalid_argument);
}

TEST(CandidateSplits, MidpointsAndOneVsRest) {
  TrainingSet data;
  data.schema = FeatureSchema({{"d", FeatureKind::Numeric, {}},
                               {"c", FeatureKind::Categorical, {"a", "b", "z"}}});
  const std::vector<std::pair<double, double>> xs{{1, 0}, {3, 1}, {3, 0}, {6, 2}, {NAN, 1}};
  for (auto [d, c] : xs) {
    TrainingRow row;
    row.x.values = {d, c};
    data.rows.push_back(row);
  }
  const std::vector<std::uint32_t> rows{0, 1, 2, 3, 4};
  const auto cands = candidate_splits(data, rows, 64);
  ASSERT_EQ(cands.size(), 5u);
  EXPECT_EQ(cands[0].threshold, 2.0);
  EXPECT_EQ(cands[1].threshold, 4.5);
  EXPECT_EQ(cands[2].symbol, 0);
  EXPECT_EQ(cands[4].symbol, 2);
}

TEST(CandidateSplits, ThresholdsAreCapped) {
  TrainingSet data;
  data.schema = FeatureSchema({{"d", FeatureKind::Numeric, {}}});
  std::vector<std::uint32_t> rows;
  for (int k = 0; k < 1000; ++k) {
    TrainingRow row;
    row.x.values = {static_cast<double>(k)};
    data.rows.push_back(row);
    rows.push_back(static_cast<std::uint32_t>(k));
  }
  const auto cands = candidate_splits(data, rows, 64);
  EXPECT_EQ(cands.size(), 64u);
  for (std::size_t k = 1; k < cands.size(); ++k) EXPECT_GT(cands[k].threshold, cands[k - 1].threshold);
}

TEST(FitTree, DepthZeroIsPlainFit) {
  const TrainingSet data = scenario_rows("single", 5, 3000, 41);
  TreeHyperparams hyper;
  hyper.max_depth = 0;
  const auto tree = fit_tree(data, hyper, BucketMap::single());
  ASSERT_EQ(tree.num_leaves(), 1u);
  const MnlFit direct = fit_mle(data.observations(), BucketMap::single());
  EXPECT_NEAR(tree.nodes()[0].train_nll, direct.nll, 1e-9 * direct.nll);
  EXPECT_NEAR(tree.segment_params(0).beta[0], direct.params.beta[0], 1e-8);
}

TEST(FitTree, RecoversPlantedSegments) {
  const TrainingSet data = scenario_rows("segments", 5, 12000, 42);
  TreeHyperparams hyper;
  hyper.max_depth = 1;
  const auto tree = fit_tree(data, hyper, BucketMap::single());
  ASSERT_EQ(tree.num_leaves(), 2u);
  const TreeNode& root = tree.nodes()[0];
  EXPECT_EQ(tree.schema()[root.rule.feature].name, "tier");
  // One leaf holds each tier; find which by routing a probe.
  FeatureVector basic = tree.schema().encode({{"tier", std::string("basic")}, {"distance", 1.0},
                                              {"region", std::string("north")}});
  FeatureVector premium = basic;
  premium.values[tree.schema().index_of("tier")] = 1.0;
  EXPECT_NEAR(tree.route(basic).params->beta[0], 0.05, 0.15 * 0.05);
  EXPECT_NEAR(tree.route(premium).params->beta[0], 0.20, 0.15 * 0.20);
}

TEST(FitTree, StructuralInvariants) {
  const TrainingSet data = scenario_rows("reference", 5, 6000, 43);
  TreeHyperparams hyper;
  hyper.max_depth = 3;
  hyper.min_leaf_samples = 400;
  hyper.max_thresholds = 8;
  const auto tree = fit_tree(data, hyper, BucketMap::single());
  EXPECT_LE(tree.depth(), 3);

  // Construction NLL never increases and each accepted split pays the gain.
  const auto& seq = tree.construction_nll();
  ASSERT_EQ(seq.size(), tree.num_leaves());
  for (std::size_t k = 1; k < seq.size(); ++k) EXPECT_LE(seq[k], seq[k - 1] - hyper.min_split_gain);

  double leaf_sum = 0.0;
  std::size_t leaf_rows = 0;
  for (const TreeNode& n : tree.nodes()) {
    if (!n.is_leaf) {
      const double children = tree.nodes()[n.left].train_nll + tree.nodes()[n.right].train_nll;
      EXPECT_LE(children, n.train_nll - hyper.min_split_gain);
      continue;
    }
    EXPECT_GE(n.rows, hyper.min_leaf_samples);
    leaf_sum += n.train_nll;
    leaf_rows += n.rows;
  }
  EXPECT_EQ(leaf_rows, data.rows.size());
  EXPECT_NEAR(leaf_sum, seq.back(), 1e-6 * leaf_sum);
  EXPECT_LE(leaf_sum, seq.front());

  // Every row routes to the leaf the oracle finds, and segment ids are the
  // depth-first leaf order.
  std::vector<int> dfs;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int at = stack.back();
    stack.pop_back();
    const TreeNode& n = tree.nodes()[at];
    if (n.is_leaf) {
      dfs.push_back(at);
    } else {
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  for (std::size_t k = 0; k < dfs.size(); ++k) {
    EXPECT_EQ(tree.leaf_node(static_cast<int>(k)), dfs[k]);
  }
  for (const TrainingRow& row : data.rows) {
    const int node = route_oracle(tree.nodes(), 0, row.x, tree.schema());
    ASSERT_EQ(tree.route_node(row.x), node);
    ASSERT_EQ(tree.leaf_node(tree.route(row.x).segment_id), node);
  }
}

TEST(FitTree, SerialAndParallelCandidateSearchAgree) {
  const TrainingSet data = scenario_rows("segments", 5, 3000, 44);
  TreeHyperparams hyper;
  hyper.max_depth = 2;
  hyper.max_thresholds = 4;
  const auto a = fit_tree(data, hyper, BucketMap::single());
  hyper.leaf_fit.parallel = false;
  const auto b = fit_tree(data, hyper, BucketMap::single());
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  for (std::size_t k = 0; k < a.nodes().size(); ++k) {
    EXPECT_EQ(a.nodes()[k].rule, b.nodes()[k].rule);
    EXPECT_NEAR(a.nodes()[k].train_nll, b.nodes()[k].train_nll, 1e-7 * a.nodes()[k].train_nll);
  }
}

TEST(FitTree, RejectsTooFewRows) {
  const TrainingSet data = scenario_rows("single", 3, 50, 45);
  TreeHyperparams hyper;
  hyper.min_leaf_samples = 100;
  EXPECT_THROW(fit_tree(data, hyper, BucketMap::single()), std::invalid_argument);
}

TEST(Routing, BoundaryMissingAndUnknown) {
  const FeatureSchema schema({{"distance", FeatureKind::Numeric, {}},
                              {"tier", FeatureKind::Categorical, {"basic", "premium"}}});
  const auto leaf = MnlParams::uniform(BucketMap::single(), 0.1, 0.0);
  std::vector<TreeNode> nodes(5);
  nodes[0].is_leaf = false;
  nodes[0].rule = {0, FeatureKind::Numeric, 10.0, -1};
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[2].is_leaf = false;
  nodes[2].rule = {1, FeatureKind::Categorical, 0.0, 1};
  nodes[2].left = 3;
  nodes[2].right = 4;
  nodes[2].left_rows = 10;
  nodes[2].right_rows = 30;
  for (auto& n : nodes) n.params = leaf;
  const SegmentationTree tree(schema, nodes, TreeHyperparams{});
  ASSERT_EQ(tree.num_leaves(), 3u);

  auto seg = [&](RawFeatures raw) { return tree.route(schema.encode(raw)).segment_id; };
  EXPECT_EQ(seg({{"distance", 10.0}}), 0);  // <= goes left
  EXPECT_EQ(seg({{"distance", 10.0001}, {"tier", std::string("premium")}}), 1);
  EXPECT_EQ(seg({{"distance", 11.0}, {"tier", std::string("basic")}}), 2);
  EXPECT_EQ(seg({}), 0);  // missing numeric goes left
  // Unknown and missing symbols follow the bigger training branch (right).
  EXPECT_EQ(seg({{"distance", 11.0}, {"tier", std::string("gold")}}), 2);
  EXPECT_EQ(seg({{"distance", 11.0}}), 2);
}

}  // namespace
}  // namespace schedprice
