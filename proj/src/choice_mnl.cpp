#include "schedprice/choice_mnl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace schedprice {

// ---------------------------------------------------------------------------
// BucketMap

BucketMap BucketMap::single() { return BucketMap{}; }

BucketMap BucketMap::weekday_runs(std::vector<int> run_lengths) {
  for (int r : run_lengths) {
    if (r < 1) throw std::invalid_argument("weekday run lengths must be positive");
  }
  BucketMap m;
  m.kind_ = Kind::WeekdayRuns;
  m.num_buckets_ = static_cast<int>(run_lengths.size()) + 2;
  m.values_ = std::move(run_lengths);
  return m;
}

BucketMap BucketMap::by_index(std::vector<int> bucket_of) {
  if (bucket_of.empty()) throw std::invalid_argument("by_index bucket map needs entries");
  const int max_b = *std::max_element(bucket_of.begin(), bucket_of.end());
  if (*std::min_element(bucket_of.begin(), bucket_of.end()) < 0) {
    throw std::invalid_argument("bucket indices must be nonnegative");
  }
  BucketMap m;
  m.kind_ = Kind::ByIndex;
  m.num_buckets_ = max_b + 1;
  m.values_ = std::move(bucket_of);
  return m;
}

BucketMap BucketMap::default_for(int num_options) {
  if (num_options >= 14) return weekday_runs({3, 3});
  if (num_options >= 7) return weekday_runs({});
  return single();
}

void BucketMap::assign_into(const LeadTimeCalendar& calendar, std::span<int> out) const {
  const int L = calendar.num_options();
  switch (kind_) {
    case Kind::Single:
      std::fill(out.begin(), out.begin() + L, 0);
      return;
    case Kind::ByIndex:
      if (L > static_cast<int>(values_.size())) {
        throw std::invalid_argument("by_index bucket map shorter than calendar");
      }
      std::copy(values_.begin(), values_.begin() + L, out.begin());
      return;
    case Kind::WeekdayRuns: {
      const int weekend_bucket = num_buckets_ - 1;
      const int start = static_cast<int>(calendar.start_day());
      int weekday_pos = 0;
      for (int k = 0; k < L; ++k) {
        if ((start + k) % 7 >= 5) {
          out[k] = weekend_bucket;
          continue;
        }
        int b = 0;
        int cum = 0;
        for (; b < static_cast<int>(values_.size()); ++b) {
          cum += values_[b];
          if (weekday_pos < cum) break;
        }
        out[k] = b;
        ++weekday_pos;
      }
      return;
    }
  }
}

std::vector<int> BucketMap::assign(const LeadTimeCalendar& calendar) const {
  std::vector<int> out(static_cast<std::size_t>(calendar.num_options()));
  assign_into(calendar, out);
  return out;
}

// ---------------------------------------------------------------------------
// MnlParams

MnlParams MnlParams::uniform(const BucketMap& buckets, double beta, double gamma, double alpha1,
                             double alpha2, double alpha3) {
  MnlParams p;
  p.alpha1 = alpha1;
  p.alpha2 = alpha2;
  p.alpha3 = alpha3;
  p.buckets = buckets;
  p.beta.assign(static_cast<std::size_t>(buckets.num_buckets()), beta);
  p.gamma.assign(static_cast<std::size_t>(buckets.num_buckets()), gamma);
  return p;
}

Eigen::VectorXd MnlParams::pack() const {
  const int B = num_buckets();
  if (static_cast<int>(beta.size()) != B || static_cast<int>(gamma.size()) != B) {
    throw std::invalid_argument("beta/gamma length does not match bucket count");
  }
  Eigen::VectorXd t(3 + 2 * B);
  t[0] = alpha1;
  t[1] = alpha2;
  t[2] = alpha3;
  for (int b = 0; b < B; ++b) {
    t[3 + b] = beta[b];
    t[3 + B + b] = gamma[b];
  }
  return t;
}

MnlParams MnlParams::unpack(const Eigen::VectorXd& theta, const BucketMap& buckets) {
  const int B = buckets.num_buckets();
  if (theta.size() != 3 + 2 * B) throw std::invalid_argument("parameter vector has wrong length");
  MnlParams p;
  p.buckets = buckets;
  p.alpha1 = theta[0];
  p.alpha2 = theta[1];
  p.alpha3 = theta[2];
  p.beta.resize(static_cast<std::size_t>(B));
  p.gamma.resize(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    p.beta[b] = theta[3 + b];
    p.gamma[b] = theta[3 + B + b];
  }
  return p;
}

ChoiceObservation ChoiceObservation::from_prices(LeadTimeCalendar calendar,
                                                 std::vector<double> prices, int chosen) {
  ChoiceObservation obs;
  obs.reference = reference_prices(prices, calendar);
  obs.calendar = std::move(calendar);
  obs.prices = std::move(prices);
  obs.chosen = chosen;
  return obs;
}

// ---------------------------------------------------------------------------
// Probabilities

namespace {

void check_lengths(const MnlParams& params, std::span<const double> prices,
                   std::span<const double> reference, const LeadTimeCalendar& calendar) {
  const auto L = static_cast<std::size_t>(calendar.num_options());
  if (prices.size() != L || reference.size() != L) {
    throw std::invalid_argument("prices/reference length does not match calendar");
  }
  if (static_cast<int>(params.beta.size()) != params.num_buckets() ||
      static_cast<int>(params.gamma.size()) != params.num_buckets()) {
    throw std::invalid_argument("beta/gamma length does not match bucket count");
  }
}

inline double trend(const MnlParams& p, int i) {
  const double x = static_cast<double>(i);
  return p.alpha1 * x + p.alpha2 * x * x + p.alpha3 * std::sqrt(x);
}

}  // namespace

std::vector<double> utilities(const MnlParams& params, std::span<const double> prices,
                              std::span<const double> reference, const LeadTimeCalendar& calendar) {
  check_lengths(params, prices, reference, calendar);
  const int L = calendar.num_options();
  const std::vector<int> bucket = params.buckets.assign(calendar);
  std::vector<double> u(static_cast<std::size_t>(L), -std::numeric_limits<double>::infinity());
  for (int k = 0; k < L; ++k) {
    if (!calendar.availability()[k]) continue;
    const int b = bucket[k];
    u[k] = trend(params, k + 1) - params.beta[b] * prices[k] -
           params.gamma[b] * (prices[k] - reference[k]);
  }
  return u;
}

void choice_probabilities_into(const MnlParams& params, std::span<const double> prices,
                               std::span<const double> reference, const LeadTimeCalendar& calendar,
                               std::span<int> bucket_scratch, std::span<double> out) {
  const int L = calendar.num_options();
  const auto& avail = calendar.availability();
  params.buckets.assign_into(calendar, bucket_scratch);
  double umax = 0.0;
  for (int k = 0; k < L; ++k) {
    if (!avail[k]) continue;
    const int b = bucket_scratch[k];
    const double u = trend(params, k + 1) - params.beta[b] * prices[k] -
                     params.gamma[b] * (prices[k] - reference[k]);
    out[k + 1] = u;
    umax = std::max(umax, u);
  }
  out[0] = std::exp(-umax);
  double denom = out[0];
  for (int k = 0; k < L; ++k) {
    if (!avail[k]) {
      out[k + 1] = 0.0;
      continue;
    }
    out[k + 1] = std::exp(out[k + 1] - umax);
    denom += out[k + 1];
  }
  const double inv = 1.0 / denom;
  for (int k = 0; k <= L; ++k) out[k] *= inv;
}

std::vector<double> choice_probabilities(const MnlParams& params, std::span<const double> prices,
                                         std::span<const double> reference,
                                         const LeadTimeCalendar& calendar) {
  const std::vector<double> u = utilities(params, prices, reference, calendar);
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (calendar.availability()[k] && !std::isfinite(u[k])) {
      throw std::domain_error("non-finite utility for option " + std::to_string(k + 1));
    }
  }
  std::vector<int> buckets(u.size());
  std::vector<double> out(u.size() + 1);
  choice_probabilities_into(params, prices, reference, calendar, buckets, out);
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood

namespace {

void check_observation(const ChoiceObservation& obs, std::size_t n) {
  const int L = obs.calendar.num_options();
  if (static_cast<int>(obs.prices.size()) != L || static_cast<int>(obs.reference.size()) != L) {
    throw std::invalid_argument("observation " + std::to_string(n) +
                                ": prices/reference length does not match calendar");
  }
  if (obs.chosen < 0 || obs.chosen > L) {
    throw std::invalid_argument("observation " + std::to_string(n) + ": chosen out of range");
  }
  if (obs.chosen > 0 && !obs.calendar.availability()[obs.chosen - 1]) {
    throw std::invalid_argument("observation " + std::to_string(n) + ": chosen option " +
                                std::to_string(obs.chosen) + " was not offered");
  }
}

}  // namespace

LogitDesign build_choice_design(std::span<const ChoiceObservation> data, const BucketMap& buckets) {
  const int B = buckets.num_buckets();
  const std::size_t P = 3 + 2 * static_cast<std::size_t>(B);
  LogitDesign design(P);
  if (!data.empty()) design.reserve(data.size(), data.front().calendar.num_options());
  std::vector<double> rows;
  std::vector<int> bucket;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const ChoiceObservation& obs = data[n];
    check_observation(obs, n);
    const int L = obs.calendar.num_options();
    bucket.resize(static_cast<std::size_t>(L));
    buckets.assign_into(obs.calendar, bucket);
    rows.clear();
    int chosen_local = -1;
    int local = 0;
    for (int k = 0; k < L; ++k) {
      if (!obs.calendar.availability()[k]) continue;
      if (k + 1 == obs.chosen) chosen_local = local;
      const double i = static_cast<double>(k + 1);
      const std::size_t base = rows.size();
      rows.resize(base + P, 0.0);
      rows[base + 0] = i;
      rows[base + 1] = i * i;
      rows[base + 2] = std::sqrt(i);
      rows[base + 3 + bucket[k]] = -obs.prices[k];
      rows[base + 3 + B + bucket[k]] = -(obs.prices[k] - obs.reference[k]);
      ++local;
    }
    design.add_situation(rows, chosen_local);
  }
  return design;
}

double negative_log_likelihood(const MnlParams& params, std::span<const ChoiceObservation> data) {
  if (data.empty()) throw std::invalid_argument("negative_log_likelihood: empty data");
  const LogitDesign design = build_choice_design(data, params.buckets);
  const auto rows = all_rows(design);
  return evaluate_logit_serial(design, rows, params.pack(), EvalLevel::Value).nll;
}

Eigen::VectorXd nll_gradient(const MnlParams& params, std::span<const ChoiceObservation> data) {
  if (data.empty()) throw std::invalid_argument("nll_gradient: empty data");
  const LogitDesign design = build_choice_design(data, params.buckets);
  const auto rows = all_rows(design);
  return evaluate_logit_serial(design, rows, params.pack(), EvalLevel::Gradient).gradient;
}

// ---------------------------------------------------------------------------
// Fitting

void check_identifiable(std::span<const ChoiceObservation> data, std::span<const std::uint32_t> rows,
                        const BucketMap& buckets) {
  const int B = buckets.num_buckets();
  if (rows.empty()) throw UnidentifiableFitError("no observations", {});
  std::vector<std::set<double>> prices(static_cast<std::size_t>(B));
  std::vector<std::size_t> purchases(static_cast<std::size_t>(B), 0);
  std::size_t total_purchases = 0;
  std::vector<int> bucket;
  for (std::uint32_t n : rows) {
    const ChoiceObservation& obs = data[n];
    const int L = obs.calendar.num_options();
    bucket.resize(static_cast<std::size_t>(L));
    buckets.assign_into(obs.calendar, bucket);
    for (int k = 0; k < L; ++k) {
      if (!obs.calendar.availability()[k]) continue;
      auto& seen = prices[bucket[k]];
      if (seen.size() < 2) seen.insert(obs.prices[k]);
    }
    if (obs.chosen > 0) {
      ++purchases[bucket[obs.chosen - 1]];
      ++total_purchases;
    }
  }
  std::vector<int> bad;
  for (int b = 0; b < B; ++b) {
    if (total_purchases == 0 || purchases[b] == 0 || prices[b].size() < 2) bad.push_back(b);
  }
  if (bad.empty()) return;
  std::ostringstream msg;
  msg << "unidentifiable MNL fit: ";
  if (total_purchases == 0) msg << "no purchases; ";
  msg << "buckets without purchases or price variation:";
  for (int b : bad) msg << ' ' << b;
  throw UnidentifiableFitError(msg.str(), bad);
}

MnlFit fit_mle_rows(const LogitDesign& design, std::span<const ChoiceObservation> data,
                    std::span<const std::uint32_t> rows, const BucketMap& buckets,
                    const MnlFitConfig& config) {
  check_identifiable(data, rows, buckets);
  const int B = buckets.num_buckets();
  const Eigen::Index P = 3 + 2 * B;
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(P, -inf);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(P, inf);
  for (int b = 0; b < B; ++b) {
    lower[3 + b] = config.beta_lower;
    lower[3 + B + b] = 0.0;
    if (!config.reference_effects) upper[3 + B + b] = 0.0;
  }
  Eigen::VectorXd start = Eigen::VectorXd::Zero(P);
  if (config.warm_start) {
    if (!(config.warm_start->buckets == buckets)) {
      throw std::invalid_argument("warm start uses a different bucket map");
    }
    start = config.warm_start->pack();
  }

  BoxFitConfig box;
  box.grad_tol = config.grad_tol;
  box.max_iter = config.max_iter;
  box.parallel = config.parallel;
  const BoxFitResult r = fit_logit_box(design, rows, lower, upper, start, box);

  MnlFit fit;
  fit.params = MnlParams::unpack(r.theta, buckets);
  fit.nll = r.nll;
  fit.projected_grad_norm = r.projected_grad_norm;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  fit.std_errors = MnlParams::unpack(standard_errors(r.hessian), buckets);
  return fit;
}

MnlFit fit_mle(std::span<const ChoiceObservation> data, const BucketMap& buckets,
               const MnlFitConfig& config) {
  if (data.empty()) throw std::invalid_argument("fit_mle: empty data");
  const LogitDesign design = build_choice_design(data, buckets);
  const auto rows = all_rows(design);
  return fit_mle_rows(design, data, rows, buckets, config);
}

}  // namespace schedprice
