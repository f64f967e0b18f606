#include <cmath>

#include <gtest/gtest.h>

#include "schedprice/mst.hpp"
#include "schedprice/predictors.hpp"
#include "test_util.hpp"

namespace schedprice {
namespace {

const char* kTable =
    "# per-region cost curves\n"
    "region,band,cost_1,cost_2,cost_3\n"
    "north,2,800,700,650\n"
    "south,2.0,900,850,800\n"
    "*,*,1000,900,800\n";

TEST(CostTable, ParsesKeysAndFallsBack) {
  const CostTable t = CostTable::from_csv(kTable);
  EXPECT_EQ(t.key_features(), (std::vector<std::string>{"region", "band"}));
  const LeadTimeCalendar cal(3, DayOfWeek::Mon);
  const auto north = t.expected_costs({{"region", std::string("north")}, {"band", 2.0}}, cal);
  EXPECT_EQ(north, (std::vector<double>{8.0, 7.0, 6.5}));
  // "2.0" in the file and 2 in the request are the same key.
  const auto south = t.expected_costs({{"region", std::string("south")}, {"band", 2.0}}, cal);
  EXPECT_EQ(south[0], 9.0);
  EXPECT_EQ(t.unknown_key_count(), 0u);
  const auto west = t.expected_costs({{"region", std::string("west")}, {"band", 2.0}}, cal);
  EXPECT_EQ(west, (std::vector<double>{10.0, 9.0, 8.0}));
  EXPECT_EQ(t.unknown_key_count(), 1u);
  t.expected_costs({}, cal);
  EXPECT_EQ(t.unknown_key_count(), 2u);
  // Prefix for shorter horizons; longer ones are an error.
  EXPECT_EQ(t.expected_costs({}, LeadTimeCalendar(2, DayOfWeek::Mon)).size(), 2u);
  EXPECT_THROW(t.expected_costs({}, LeadTimeCalendar(4, DayOfWeek::Mon)), std::invalid_argument);
}

TEST(CostTable, CsvRoundTrip) {
  const CostTable t = CostTable::from_csv(kTable);
  const CostTable back = CostTable::from_csv(t.to_csv());
  EXPECT_EQ(back, t);

  Rng rng(51);
  CostTable r({"k"}, {});
  for (int k = 0; k < 50; ++k) {
    std::vector<double> curve;
    for (int i = 0; i < 14; ++i) curve.push_back(static_cast<double>(rng.below(100000)) / 100.0);
    r.add_curve({"key" + std::to_string(k)}, curve);
  }
  EXPECT_EQ(CostTable::from_csv(r.to_csv()), r);
}

TEST(CostTable, RejectsMalformedCsv) {
  EXPECT_THROW(CostTable::from_csv("region,price\nnorth,1\n"), std::invalid_argument);
  EXPECT_THROW(CostTable::from_csv("region,cost_2\nnorth,1\n"), std::invalid_argument);
  EXPECT_THROW(CostTable::from_csv("region,cost_1\nnorth\n"), std::invalid_argument);
  EXPECT_THROW(CostTable::from_csv("region,cost_1\nnorth,abc\n"), std::invalid_argument);
  EXPECT_THROW(CostTable::from_csv("region,cost_1\nnorth,-5\n"), std::invalid_argument);
}

TEST(CostTable, ConstantTable) {
  const CostTable t = CostTable::constant(4, 2.5);
  EXPECT_EQ(t.expected_costs({{"x", 1.0}}, LeadTimeCalendar(4, DayOfWeek::Sat)),
            std::vector<double>(4, 2.5));
  EXPECT_EQ(t.unknown_key_count(), 0u);
}

const FeatureSchema kSchema({{"distance", FeatureKind::Numeric, {}},
                             {"tier", FeatureKind::Categorical, {"basic", "premium"}}});

std::vector<CancellationRow> planted_cancellations(Rng& rng, const LogisticCoefficients& truth,
                                                   int L, std::size_t n) {
  std::vector<CancellationRow> rows;
  for (std::size_t k = 0; k < n; ++k) {
    CancellationRow r;
    const double d = rng.uniform(0.0, 10.0);
    r.x.values = {d, static_cast<double>(rng.below(2))};
    r.option = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(L)));
    r.canceled = rng.bernoulli(truth.probability(std::vector<double>{d}, r.option));
    rows.push_back(r);
  }
  return rows;
}

TEST(Cancellation, LinearLogisticRecovery) {
  Rng rng(52);
  LogisticCoefficients truth;
  truth.intercept = -2.0;
  truth.encoding = OptionEncoding::Linear;
  truth.option_effect = {0.15};
  truth.numeric_effect = {0.1};
  const auto rows = planted_cancellations(rng, truth, 7, 40000);
  CancelFitConfig cfg;
  cfg.encoding = OptionEncoding::Linear;
  const CancelFit fit = fit_cancellation(rows, kSchema, 7, cfg);
  ASSERT_TRUE(fit.converged);
  const auto& c = fit.coefficients;
  EXPECT_NEAR(c.intercept, -2.0, 4 * fit.std_errors.intercept);
  EXPECT_NEAR(c.option_effect[0], 0.15, 4 * fit.std_errors.option_effect[0]);
  EXPECT_NEAR(c.numeric_effect[0], 0.1, 4 * fit.std_errors.numeric_effect[0]);
  // Planted coefficients are increasing in the option, so is the fit.
  for (int i = 2; i <= 7; ++i) {
    EXPECT_GT(c.probability(std::vector<double>{3.0}, i), c.probability(std::vector<double>{3.0}, i - 1));
  }
}

TEST(Cancellation, OneHotMatchesEmpiricalRates) {
  Rng rng(53);
  LogisticCoefficients truth;
  truth.intercept = -1.5;
  truth.encoding = OptionEncoding::OneHot;
  truth.option_effect = {0.0, 0.3, 0.6};
  const auto rows = planted_cancellations(rng, truth, 3, 6000);
  CancelFitConfig cfg;
  cfg.use_numeric_features = false;
  cfg.l2 = 0.0;
  const CancelFit fit = fit_cancellation(rows, kSchema, 3, cfg);
  // Saturated model: fitted rate per option is the empirical rate.
  for (int i = 1; i <= 3; ++i) {
    double n = 0, k = 0;
    for (const auto& r : rows) {
      if (r.option != i) continue;
      n += 1;
      k += r.canceled ? 1 : 0;
    }
    EXPECT_NEAR(fit.coefficients.probability({}, i), k / n, 1e-7);
  }
}

TEST(Cancellation, SingleClassGivesClippedConstant) {
  std::vector<CancellationRow> rows(20);
  for (auto& r : rows) r.x.values = {1.0, 0.0};
  const CancelFit none = fit_cancellation(rows, kSchema, 3);
  ASSERT_TRUE(none.coefficients.constant_rate.has_value());
  EXPECT_EQ(*none.coefficients.constant_rate, 1e-4);
  for (auto& r : rows) r.canceled = true;
  EXPECT_EQ(*fit_cancellation(rows, kSchema, 3).coefficients.constant_rate, 1.0 - 1e-4);
  EXPECT_THROW(fit_cancellation({}, kSchema, 3), std::invalid_argument);
}

TEST(Cancellation, PerSegmentModelsNeedEnoughRows) {
  Rng rng(54);
  const auto leaf = MnlParams::uniform(BucketMap::single(), 0.1, 0.0);
  std::vector<TreeNode> nodes(3);
  nodes[0].is_leaf = false;
  nodes[0].rule = {1, FeatureKind::Categorical, 0.0, 0};
  nodes[0].left = 1;
  nodes[0].right = 2;
  for (auto& n : nodes) n.params = leaf;
  const SegmentationTree tree(kSchema, nodes, TreeHyperparams{});

  std::vector<CancellationRow> rows;
  for (int k = 0; k < 3000; ++k) {
    CancellationRow r;
    const bool basic = k < 2500;
    r.x.values = {rng.uniform(0, 10), basic ? 0.0 : 1.0};
    r.option = 1;
    r.canceled = rng.bernoulli(basic ? 0.3 : 0.05);
    rows.push_back(r);
  }
  CancelFitConfig cfg;
  cfg.encoding = OptionEncoding::None;
  cfg.use_numeric_features = false;
  const auto model = fit_cancellation_model(tree, rows, 3, 1000, cfg);
  EXPECT_EQ(model.by_segment().size(), 1u);
  EXPECT_TRUE(model.by_segment().contains(0));
  FeatureVector basic{{1.0, 0.0}};
  FeatureVector premium{{1.0, 1.0}};
  EXPECT_NEAR(model.cancel_probability(basic, 1, 0), 0.3, 0.03);
  // Segment 1 has too few rows and uses the pooled model.
  EXPECT_EQ(model.cancel_probability(premium, 1, 1), model.cancel_probability(premium, 1, -1));
  EXPECT_NEAR(model.execute_probability(basic, 1, 0), 1.0 - model.cancel_probability(basic, 1, 0),
              1e-15);
  EXPECT_EQ(CancellationModel::constant(0.2).cancel_probabilities(basic, 4),
            std::vector<double>(4, 0.2));
  EXPECT_THROW(CancellationModel::constant(1.5), std::invalid_argument);
}

}  // namespace
}  // namespace schedprice
