#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "schedprice/choice_mnl.hpp"
#include "test_util.hpp"

namespace schedprice {
namespace {

using testing::random_calendar;
using testing::random_params;
using testing::random_prices;
using testing::simulate_choices;

// Direct exponentiation with no max shift; fine for the moderate utilities
// used here and shares no code with the library.
std::vector<double> probability_oracle(const MnlParams& m, const std::vector<double>& p,
                                       const std::vector<double>& r, const LeadTimeCalendar& cal) {
  const auto bucket = m.buckets.assign(cal);
  std::vector<double> e(p.size() + 1, 0.0);
  e[0] = 1.0;
  double total = 1.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!cal.availability()[k]) continue;
    const double i = static_cast<double>(k + 1);
    const int b = bucket[k];
    const double u = m.alpha1 * i + m.alpha2 * i * i + m.alpha3 * std::sqrt(i) - m.beta[b] * p[k] -
                     m.gamma[b] * (p[k] - r[k]);
    e[k + 1] = std::exp(u);
    total += e[k + 1];
  }
  for (double& v : e) v /= total;
  return e;
}

TEST(ChoiceProbabilities, ToyExample) {
  const LeadTimeCalendar cal(7, DayOfWeek::Sun);
  const std::vector<double> p{10, 11, 9, 12, 12, 10, 8};
  const auto params = MnlParams::uniform(BucketMap::single(), 0.10, 0.05);
  const auto r = reference_prices(p, cal);
  const auto probs = choice_probabilities(params, p, r, cal);
  const std::vector<double> rounded{0.295, 0.098, 0.089, 0.120, 0.076, 0.080, 0.109, 0.133};
  ASSERT_EQ(probs.size(), rounded.size());
  const auto oracle = probability_oracle(params, p, r, cal);
  for (std::size_t k = 0; k < probs.size(); ++k) {
    EXPECT_NEAR(probs[k], rounded[k], 5e-4) << "option " << k;
    EXPECT_NEAR(probs[k], oracle[k], 1e-14) << "option " << k;
  }
  EXPECT_NEAR(probs[0], 0.2950187197566705, 1e-13);
}

TEST(ChoiceProbabilities, UnavailableOptionsGetZero) {
  const LeadTimeCalendar cal(DayOfWeek::Tue, {true, false, true});
  const std::vector<double> p{5, 1, 5};
  const auto params = MnlParams::uniform(BucketMap::single(), 0.2, 0.1);
  const auto u = utilities(params, p, reference_prices(p, cal), cal);
  EXPECT_TRUE(std::isinf(u[1]) && u[1] < 0);
  const auto probs = choice_probabilities(params, p, reference_prices(p, cal), cal);
  EXPECT_EQ(probs[2], 0.0);
  EXPECT_NEAR(probs[1], probs[3], 1e-15);
}

TEST(ChoiceProbabilities, LargeUtilitiesStayFinite) {
  const LeadTimeCalendar cal(3, DayOfWeek::Mon);
  auto params = MnlParams::uniform(BucketMap::single(), 1e-4, 0.0, 300.0);
  const std::vector<double> p{1, 1, 1};
  const auto probs = choice_probabilities(params, p, p, cal);
  EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(probs[3], 1.0, 1e-12);
  params.alpha1 = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(choice_probabilities(params, p, p, cal), std::domain_error);
}

TEST(ChoiceProbabilitiesProperty, MatchesOracleAndSumsToOne) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const int L = 1 + static_cast<int>(rng.below(20));
    const auto buckets = BucketMap::default_for(L);
    const auto params = random_params(rng, buckets);
    const auto cal = random_calendar(rng, L);
    const auto p = random_prices(rng, L, 0.0, 40.0);
    const auto r = reference_prices(p, cal);
    const auto probs = choice_probabilities(params, p, r, cal);
    const auto oracle = probability_oracle(params, p, r, cal);
    ASSERT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-12);
    for (std::size_t k = 0; k < probs.size(); ++k) ASSERT_NEAR(probs[k], oracle[k], 1e-12);
  }
}

// Own price up means own probability down, with reference prices
// recomputed after the change.
TEST(ChoiceProbabilitiesProperty, OwnProbabilityStrictlyDecreasing) {
  Rng rng(22);
  const int L = 14;
  for (int trial = 0; trial < 300; ++trial) {
    const auto params = random_params(rng, BucketMap::default_for(L));
    const LeadTimeCalendar cal(L, testing::random_day(rng));
    auto p = random_prices(rng, L, 2.0, 30.0);
    const int i = 1 + static_cast<int>(rng.below(L));
    const auto before = choice_probabilities(params, p, reference_prices(p, cal), cal);
    p[i - 1] += rng.uniform(0.01, 5.0);
    const auto after = choice_probabilities(params, p, reference_prices(p, cal), cal);
    ASSERT_LT(after[i], before[i]);
  }
}

// With reference prices held fixed the model is a plain MNL in p_i, so
// every other option gains.
TEST(ChoiceProbabilitiesProperty, FrozenReferenceOthersNeverDecrease) {
  Rng rng(29);
  const int L = 14;
  for (int trial = 0; trial < 300; ++trial) {
    const auto params = random_params(rng, BucketMap::default_for(L));
    const LeadTimeCalendar cal(L, testing::random_day(rng));
    auto p = random_prices(rng, L, 2.0, 30.0);
    const auto r = reference_prices(p, cal);
    const int i = 1 + static_cast<int>(rng.below(L));
    const auto before = choice_probabilities(params, p, r, cal);
    p[i - 1] += rng.uniform(0.01, 5.0);
    const auto after = choice_probabilities(params, p, r, cal);
    for (int j = 0; j <= L; ++j) {
      if (j != i) ASSERT_GT(after[j], before[j]);
    }
  }
}

// Raising a price that is the window minimum of both neighbours shrinks
// their reference gaps. When the neighbours' combined gain outweighs the
// option's own loss, the no-purchase share and unrelated options fall.
TEST(ChoiceProbabilities, ReferenceRecomputationCanLowerThirdOptions) {
  const LeadTimeCalendar cal(5, DayOfWeek::Mon);
  const auto params = MnlParams::uniform(BucketMap::single(), 0.10, 0.10);
  std::vector<double> p{10, 9, 10, 10, 10};
  const auto before = choice_probabilities(params, p, reference_prices(p, cal), cal);
  p[1] = 9.5;
  const auto after = choice_probabilities(params, p, reference_prices(p, cal), cal);
  EXPECT_LT(after[2], before[2]);
  EXPECT_GT(after[1], before[1]);
  EXPECT_GT(after[3], before[3]);
  EXPECT_LT(after[0], before[0]);
  EXPECT_LT(after[5], before[5]);
  EXPECT_NEAR(after[0], 0.35431147769208, 1e-12);
}

TEST(ChoiceProbabilities, NeighbourBoostFromLowerPrice) {
  // Option 6 (Fri, 10) is the unique window minimum for option 5 (Thu, 12).
  const LeadTimeCalendar cal(7, DayOfWeek::Sun);
  const auto params = MnlParams::uniform(BucketMap::single(), 0.10, 0.05);
  std::vector<double> p{10, 11, 9, 12, 12, 10, 8};
  const double before = choice_probabilities(params, p, reference_prices(p, cal), cal)[5];
  p[5] = 11;
  const double after = choice_probabilities(params, p, reference_prices(p, cal), cal)[5];
  EXPECT_GT(after, before);
}

TEST(BucketMap, DefaultForFourteenOptions) {
  const auto map = BucketMap::default_for(14);
  EXPECT_EQ(map.num_buckets(), 4);
  const LeadTimeCalendar cal(14, DayOfWeek::Mon);
  // Mon..Fri, Sat, Sun, Mon..Fri, Sat, Sun
  const std::vector<int> expected{0, 0, 0, 1, 1, 3, 3, 1, 2, 2, 2, 2, 3, 3};
  EXPECT_EQ(map.assign(cal), expected);
  EXPECT_EQ(BucketMap::default_for(7).num_buckets(), 2);
  EXPECT_EQ(BucketMap::default_for(5).num_buckets(), 1);
}

TEST(BucketMap, ByIndexAndPackRoundTrip) {
  const auto map = BucketMap::by_index({0, 1, 1});
  EXPECT_EQ(map.num_buckets(), 2);
  MnlParams m = MnlParams::uniform(map, 0.1, 0.2, 1, 2, 3);
  m.beta[1] = 0.4;
  const auto theta = m.pack();
  ASSERT_EQ(theta.size(), 7);
  EXPECT_EQ(MnlParams::unpack(theta, map), m);
  EXPECT_THROW(map.assign(LeadTimeCalendar(4, DayOfWeek::Mon)), std::invalid_argument);
}

TEST(Nll, GradientMatchesCentralDifferences) {
  Rng rng(23);
  const int L = 14;
  const auto buckets = BucketMap::default_for(L);
  for (int trial = 0; trial < 10; ++trial) {
    const auto truth = random_params(rng, buckets);
    const auto data = simulate_choices(rng, truth, L, 200);
    const auto at = random_params(rng, buckets);
    const Eigen::VectorXd g = nll_gradient(at, data);
    Eigen::VectorXd fd(g.size());
    const Eigen::VectorXd theta = at.pack();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta[k]));
      Eigen::VectorXd up = theta, dn = theta;
      up[k] += h;
      dn[k] -= h;
      fd[k] = (negative_log_likelihood(MnlParams::unpack(up, buckets), data) -
               negative_log_likelihood(MnlParams::unpack(dn, buckets), data)) /
              (2 * h);
    }
    EXPECT_LT((g - fd).norm() / std::max(g.norm(), 1e-8), 1e-6) << "trial " << trial;
  }
}

TEST(Nll, RejectsChoiceOfUnofferedOption) {
  ChoiceObservation obs =
      ChoiceObservation::from_prices(LeadTimeCalendar(DayOfWeek::Mon, {true, false}), {1, 2}, 2);
  const std::vector<ChoiceObservation> data{obs};
  EXPECT_THROW(negative_log_likelihood(MnlParams::uniform(BucketMap::single(), 0.1, 0), data),
               std::invalid_argument);
  EXPECT_THROW(negative_log_likelihood(MnlParams::uniform(BucketMap::single(), 0.1, 0), {}),
               std::invalid_argument);
}

TEST(FitMle, KktConditionsHold) {
  Rng rng(24);
  const int L = 7;
  const auto buckets = BucketMap::default_for(L);
  auto truth = MnlParams::uniform(buckets, 0.12, 0.0, -0.2, 0.0, 1.0);
  const auto data = simulate_choices(rng, truth, L, 4000);
  const MnlFit fit = fit_mle(data, buckets);
  ASSERT_TRUE(fit.converged);
  const Eigen::VectorXd g = nll_gradient(fit.params, data);
  const Eigen::VectorXd theta = fit.params.pack();
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const bool at_bound = (k >= 3 && k < 3 + buckets.num_buckets() && theta[k] <= 1e-4 + 1e-12) ||
                          (k >= 3 + buckets.num_buckets() && theta[k] <= 1e-12);
    if (at_bound) {
      EXPECT_GE(g[k], -1e-5) << "bound coordinate " << k;
    } else {
      EXPECT_NEAR(g[k], 0.0, 1e-4) << "free coordinate " << k;
    }
  }
  // No feasible neighbour does better.
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    for (double step : {-1e-3, 1e-3}) {
      Eigen::VectorXd t = theta;
      t[k] = std::max(t[k] + step, k >= 3 ? (k < 3 + buckets.num_buckets() ? 1e-4 : 0.0) : -1e9);
      EXPECT_GE(negative_log_likelihood(MnlParams::unpack(t, buckets), data), fit.nll - 1e-9);
    }
  }
}

TEST(FitMle, RecoversPlantedParameters) {
  Rng rng(25);
  const int L = 7;
  const auto truth = MnlParams::uniform(BucketMap::single(), 0.10, 0.05, -0.25, 0.0, 1.2);
  const auto data = simulate_choices(rng, truth, L, 20000);
  const MnlFit fit = fit_mle(data, BucketMap::single());
  EXPECT_NEAR(fit.params.beta[0], 0.10, 4 * fit.std_errors.beta[0]);
  EXPECT_NEAR(fit.params.gamma[0], 0.05, 4 * fit.std_errors.gamma[0]);
  EXPECT_NEAR(fit.params.alpha1, -0.25, 4 * fit.std_errors.alpha1);
  EXPECT_GT(fit.std_errors.beta[0], 0.0);
}

TEST(FitMle, SerialAndParallelKernelsAgree) {
  Rng rng(26);
  const auto truth = MnlParams::uniform(BucketMap::single(), 0.1, 0.05, 0.0, 0.0, 1.0);
  const auto data = simulate_choices(rng, truth, 5, 3000);
  MnlFitConfig serial;
  serial.parallel = false;
  const MnlFit a = fit_mle(data, BucketMap::single(), serial);
  const MnlFit b = fit_mle(data, BucketMap::single());
  EXPECT_NEAR(a.nll, b.nll, 1e-9 * a.nll);
  EXPECT_NEAR(a.params.beta[0], b.params.beta[0], 1e-7);
}

TEST(FitMle, PlainMnlPinsGamma) {
  Rng rng(27);
  const auto truth = MnlParams::uniform(BucketMap::single(), 0.1, 0.1, 0.0, 0.0, 1.0);
  const auto data = simulate_choices(rng, truth, 5, 2000);
  MnlFitConfig cfg;
  cfg.reference_effects = false;
  EXPECT_EQ(fit_mle(data, BucketMap::single(), cfg).params.gamma[0], 0.0);
}

TEST(FitMle, UnidentifiableDataIsRejected) {
  Rng rng(28);
  std::vector<ChoiceObservation> none;
  for (int k = 0; k < 50; ++k) {
    none.push_back(ChoiceObservation::from_prices(LeadTimeCalendar(3, DayOfWeek::Mon),
                                                  random_prices(rng, 3, 1, 9), 0));
  }
  EXPECT_THROW(fit_mle(none, BucketMap::single()), UnidentifiableFitError);

  // Every weekend option priced the same: the weekend bucket cannot be fit.
  std::vector<ChoiceObservation> flat;
  for (int k = 0; k < 200; ++k) {
    const LeadTimeCalendar cal(7, DayOfWeek::Mon);
    auto p = random_prices(rng, 7, 1, 9);
    p[5] = p[6] = 4.0;
    flat.push_back(ChoiceObservation::from_prices(cal, p, 1 + static_cast<int>(rng.below(7))));
  }
  try {
    fit_mle(flat, BucketMap::default_for(7));
    FAIL() << "expected UnidentifiableFitError";
  } catch (const UnidentifiableFitError& e) {
    EXPECT_EQ(e.buckets(), std::vector<int>{1});
  }
}

}  // namespace
}  // namespace schedprice
