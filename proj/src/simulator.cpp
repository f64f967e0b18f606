#include "schedprice/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "schedprice/logit_fit.hpp"

namespace schedprice {

namespace {
constexpr std::uint64_t kQuoteStream = 0x9001e5;
constexpr std::uint64_t kPolicyStream = 0x90117c;
constexpr std::uint64_t kArmStream = 0xab7e57;
}  // namespace

// ---------------------------------------------------------------------------
// Ground truth

FeatureGenerator FeatureGenerator::uniform(std::string name, double lo, double hi) {
  return {std::move(name), Kind::Uniform, lo, hi, {}, {}};
}

FeatureGenerator FeatureGenerator::normal(std::string name, double mean, double sd) {
  return {std::move(name), Kind::Normal, mean, sd, {}, {}};
}

FeatureGenerator FeatureGenerator::categorical(std::string name, std::vector<std::string> symbols,
                                               std::vector<double> weights) {
  if (symbols.empty() || symbols.size() != weights.size()) {
    throw std::invalid_argument("categorical generator needs one weight per symbol");
  }
  return {std::move(name), Kind::Categorical, 0.0, 0.0, std::move(symbols), std::move(weights)};
}

FeatureGenerator FeatureGenerator::constant(std::string name, double value) {
  return {std::move(name), Kind::Constant, value, 0.0, {}, {}};
}

RawValue FeatureGenerator::sample(Rng& rng) const {
  switch (kind) {
    case Kind::Uniform:
      return rng.uniform(a, b);
    case Kind::Normal: {
      // Box-Muller; one draw per call keeps the stream layout simple.
      const double u1 = 1.0 - rng.uniform();
      const double u2 = rng.uniform();
      return a + b * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    case Kind::Categorical:
      return symbols[rng.categorical(weights)];
    case Kind::Constant:
      return a;
  }
  return a;
}

FeatureSpec FeatureGenerator::spec() const {
  if (kind != Kind::Categorical) return {name, FeatureKind::Numeric, {}};
  std::vector<std::string> vocab = symbols;
  std::sort(vocab.begin(), vocab.end());
  return {name, FeatureKind::Categorical, vocab};
}

FeatureSchema GroundTruth::schema() const {
  std::vector<FeatureSpec> specs;
  for (const auto& g : features) specs.push_back(g.spec());
  std::sort(specs.begin(), specs.end(),
            [](const FeatureSpec& a, const FeatureSpec& b) { return a.name < b.name; });
  return FeatureSchema(std::move(specs));
}

SegmentationTree planted_tree(const FeatureSchema& schema, const SplitRule& rule, MnlParams left,
                              MnlParams right) {
  std::vector<TreeNode> nodes(3);
  nodes[0].is_leaf = false;
  nodes[0].rule = rule;
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[0].params = left;
  nodes[1].depth = 1;
  nodes[1].params = std::move(left);
  nodes[2].depth = 1;
  nodes[2].params = std::move(right);
  return SegmentationTree(schema, std::move(nodes), TreeHyperparams{});
}

namespace {

CostTable scenario_costs(int L) {
  auto curve = [L](double base) {
    std::vector<double> c(static_cast<std::size_t>(L));
    for (int i = 1; i <= L; ++i) c[i - 1] = std::round((base + 3.0 / i) * 100.0) / 100.0;
    return c;
  };
  CostTable t({"region"}, curve(10.0));
  t.add_curve({"north"}, curve(8.0));
  t.add_curve({"south"}, curve(10.0));
  t.add_curve({"west"}, curve(12.0));
  return t;
}

WindowTruth scenario_windows() {
  WindowTruth w;
  w.catalog = WindowCatalog::uniform(3);
  std::vector<double> shape = {0.3, 0.6, 0.4, 0.1, 0.0, 0.2, -0.3, -0.5};
  // Remove any linear trend so delta alone carries it.
  const double jbar = 4.5;
  double sxy = 0.0, sxx = 0.0;
  for (int j = 1; j <= 8; ++j) {
    sxy += (j - jbar) * shape[j - 1];
    sxx += (j - jbar) * (j - jbar);
  }
  for (int j = 1; j <= 8; ++j) w.params.alpha.push_back(1.5 + shape[j - 1] - sxy / sxx * (j - jbar));
  w.params.beta = 0.15;
  w.params.delta = -0.05;
  w.params.gamma = {0.01, -0.02};  // distance, lead time
  w.cost_offsets = {0.0, 1.0, 2.0, 0.5, 1.5, 3.0, 2.5, 1.0};
  return w;
}

}  // namespace

GroundTruth make_scenario(const std::string& name, int num_options, bool with_windows) {
  if (num_options < 1) throw std::invalid_argument("num_options must be >= 1");
  GroundTruth t;
  t.num_options = num_options;
  t.features = {FeatureGenerator::uniform("distance", 0.0, 50.0),
                FeatureGenerator::categorical("region", {"north", "south", "west"}, {0.4, 0.35, 0.25}),
                FeatureGenerator::categorical("tier", {"basic", "premium"}, {0.5, 0.5})};
  const FeatureSchema schema = t.schema();
  const BucketMap single = BucketMap::single();
  t.costs = scenario_costs(num_options);
  const int tier = schema.index_of("tier");
  const SplitRule on_tier{tier, FeatureKind::Categorical, 0.0, 0};  // "basic" goes left

  if (name == "single") {
    t.tree = SegmentationTree::single_leaf(schema, MnlParams::uniform(single, 0.10, 0.05, -0.25, 0.0, 1.2));
    t.cancellation = CancellationModel::constant(0.1);
  } else if (name == "segments") {
    t.tree = planted_tree(schema, on_tier, MnlParams::uniform(single, 0.05, 0.05, -0.25, 0.0, 1.2),
                          MnlParams::uniform(single, 0.20, 0.05, -0.25, 0.0, 1.2));
    t.cancellation = CancellationModel::constant(0.1);
  } else if (name == "reference") {
    t.tree = planted_tree(schema, on_tier, MnlParams::uniform(single, 0.06, 0.20, -0.20, 0.0, 1.5),
                          MnlParams::uniform(single, 0.12, 0.15, -0.30, 0.0, 1.8));
    LogisticCoefficients cancel;
    cancel.intercept = -2.5;
    cancel.encoding = OptionEncoding::Linear;
    cancel.option_effect = {0.08};
    cancel.numeric_effect = {0.0};
    t.cancellation = CancellationModel(schema, cancel);
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
  if (with_windows) t.windows = scenario_windows();
  return t;
}

// ---------------------------------------------------------------------------
// Policies

PricingFn random_markup_policy(double lo, double hi) {
  return [lo, hi](const QuoteContext& ctx) {
    Rng rng(ctx.policy_seed);
    std::vector<double> p(ctx.costs->size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = (*ctx.costs)[i] + rng.uniform(lo, hi);
    return p;
  };
}

PricingFn fixed_markup_policy(double markup) {
  return [markup](const QuoteContext& ctx) {
    std::vector<double> p(*ctx.costs);
    for (double& v : p) v += markup;
    return p;
  };
}

// ---------------------------------------------------------------------------
// Quote generation

namespace {

std::vector<std::int64_t> round_prices(const std::vector<double>& p, std::size_t expected) {
  if (p.size() != expected) throw std::invalid_argument("pricing policy returned wrong length");
  std::vector<std::int64_t> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) {
      throw std::invalid_argument("pricing policy returned a negative or non-finite price");
    }
    out[i] = to_minor(p[i]);
  }
  return out;
}

ChoiceRecord simulate_one(const GroundTruth& truth, const FeatureSchema& schema,
                          std::uint64_t index, const PricingFn& pricing, const SimConfig& config) {
  Rng rng(derive_seed(config.seed, kQuoteStream, index));
  const int L = truth.num_options;
  ChoiceRecord r;
  r.quote_id = config.id_prefix + std::to_string(index);
  r.timestamp = truth.start_time + static_cast<std::int64_t>(index) * truth.quote_interval;

  for (const auto& g : truth.features) r.features[g.name] = g.sample(rng);
  std::vector<bool> avail(static_cast<std::size_t>(L), true);
  if (truth.availability < 1.0) {
    bool any = false;
    for (int i = 0; i < L; ++i) {
      avail[i] = rng.bernoulli(truth.availability);
      any = any || avail[i];
    }
    if (!any) avail[rng.below(static_cast<std::uint64_t>(L))] = true;
  }
  const LeadTimeCalendar calendar(advance(utc_day_of_week(r.timestamp), 1), avail);
  const FeatureVector x = schema.encode(r.features);

  std::vector<double> costs = truth.costs.expected_costs(r.features, calendar);
  std::vector<std::int64_t> cost_minor(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    cost_minor[i] = to_minor(costs[i]);
    costs[i] = to_major(cost_minor[i]);
  }

  QuoteContext ctx;
  ctx.index = index;
  ctx.timestamp = r.timestamp;
  ctx.raw = &r.features;
  ctx.x = &x;
  ctx.calendar = &calendar;
  ctx.costs = &costs;
  ctx.policy_seed = derive_seed(config.seed, kPolicyStream, index);
  const std::vector<std::int64_t> price_minor = round_prices(pricing(ctx), costs.size());
  std::vector<double> prices(price_minor.size());
  for (std::size_t i = 0; i < prices.size(); ++i) prices[i] = to_major(price_minor[i]);

  for (int i = 0; i < L; ++i) {
    r.options.push_back({i + 1, calendar.day_of(i + 1), avail[i], price_minor[i], cost_minor[i]});
  }

  const RoutedSegment seg = truth.tree.route(x);
  const std::vector<double> ref = reference_prices(prices, calendar);
  const std::vector<double> probs = choice_probabilities(*seg.params, prices, ref, calendar);
  int chosen = static_cast<int>(rng.categorical(probs));

  if (truth.windows) {
    const WindowTruth& w = *truth.windows;
    const int M = w.catalog.size();
    SecondLevelRecord sl;
    const std::vector<double> numeric = schema.numeric_values(x);
    std::vector<std::vector<double>> win_prices(static_cast<std::size_t>(L));
    for (int i = 1; i <= L; ++i) {
      if (!avail[i - 1]) continue;
      std::vector<double> wc(static_cast<std::size_t>(M));
      std::vector<std::int64_t> wc_minor(wc.size());
      for (int j = 0; j < M; ++j) {
        wc_minor[j] = to_minor(costs[i - 1] + w.cost_offsets[j]);
        wc[j] = to_major(wc_minor[j]);
      }
      std::vector<std::int64_t> wp_minor;
      if (config.window_pricing) {
        wp_minor = round_prices(config.window_pricing(ctx, i, prices[i - 1], wc), wc.size());
      } else {
        wp_minor.assign(wc.size(), price_minor[i - 1]);
      }
      auto& wp = win_prices[i - 1];
      for (int j = 0; j < M; ++j) {
        wp.push_back(to_major(wp_minor[j]));
        sl.windows.push_back({i, j + 1, wp_minor[j], wc_minor[j]});
      }
    }
    if (chosen > 0) {
      const auto wx = window_features(numeric, chosen);
      const auto wprobs = window_probabilities(w.params, wx, win_prices[chosen - 1]);
      const int window = static_cast<int>(rng.categorical(wprobs));
      if (window > 0) {
        sl.clicked_lead_time = chosen;
        sl.chosen_window = window;
      } else {
        chosen = 0;
      }
    }
    r.second_level = std::move(sl);
  }

  r.chosen = chosen;
  if (chosen > 0) {
    r.canceled = rng.bernoulli(truth.cancellation.cancel_probability(x, chosen, seg.segment_id));
  }
  return r;
}

}  // namespace

SimLog generate_quotes(const GroundTruth& truth, std::size_t n, const PricingFn& pricing,
                       const SimConfig& config) {
  if (n == 0) throw std::invalid_argument("generate_quotes: n must be >= 1");
  const FeatureSchema schema = truth.schema();
  SimLog log;
  log.records.resize(n);
  if (config.parallel) {
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto N = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t k = 0; k < N; ++k) {
      try {
        log.records[k] = simulate_one(truth, schema, config.first_index + k, pricing, config);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    for (std::size_t k = 0; k < n; ++k) {
      log.records[k] = simulate_one(truth, schema, config.first_index + k, pricing, config);
    }
  }
  log.quotes = n;
  for (const auto& r : log.records) {
    log.conversions += r.chosen > 0 ? 1 : 0;
    log.cancellations += r.canceled ? 1 : 0;
  }
  return log;
}

// ---------------------------------------------------------------------------
// Metrics

double brier_score(std::span<const std::vector<double>> predicted, std::span<const int> outcomes) {
  if (predicted.size() != outcomes.size()) throw std::invalid_argument("one outcome per row");
  if (predicted.empty()) throw std::invalid_argument("brier_score: no rows");
  double total = 0.0;
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    const auto& p = predicted[n];
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("prediction does not sum to 1");
    if (outcomes[n] < 0 || static_cast<std::size_t>(outcomes[n]) >= p.size()) {
      throw std::invalid_argument("outcome out of range");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - (static_cast<int>(i) == outcomes[n] ? 1.0 : 0.0);
      total += d * d;
    }
  }
  return total / static_cast<double>(predicted.size());
}

NaiveModel NaiveModel::fit(const TrainingSet& data) {
  if (data.rows.empty()) throw std::invalid_argument("NaiveModel::fit: empty data");
  NaiveModel m;
  for (const auto& row : data.rows) {
    const auto k = static_cast<std::size_t>(row.obs.chosen);
    if (m.rates_.size() <= k) m.rates_.resize(k + 1, 0.0);
    m.rates_[k] += 1.0;
  }
  const auto N = static_cast<double>(data.rows.size());
  for (double& r : m.rates_) r /= N;
  m.floor_ = 0.5 / N;
  return m;
}

std::vector<double> NaiveModel::predict(const ChoiceObservation& obs) const {
  const int L = obs.calendar.num_options();
  std::vector<double> p(static_cast<std::size_t>(L) + 1, 0.0);
  auto rate = [&](std::size_t k) { return std::max(k < rates_.size() ? rates_[k] : 0.0, floor_); };
  p[0] = rate(0);
  double z = p[0];
  for (int i = 1; i <= L; ++i) {
    if (!obs.calendar.availability()[i - 1]) continue;
    p[i] = rate(static_cast<std::size_t>(i));
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

ChoicePredictor naive_predictor(NaiveModel model) {
  return [m = std::move(model)](const TrainingRow& row) { return m.predict(row.obs); };
}

ChoicePredictor mnl_predictor(MnlParams params) {
  return [p = std::move(params)](const TrainingRow& row) {
    return choice_probabilities(p, row.obs.prices, row.obs.reference, row.obs.calendar);
  };
}

ChoicePredictor tree_predictor(SegmentationTree tree) {
  auto t = std::make_shared<const SegmentationTree>(std::move(tree));
  return [t](const TrainingRow& row) {
    const RoutedSegment seg = t->route(row.x);
    return choice_probabilities(*seg.params, row.obs.prices, row.obs.reference, row.obs.calendar);
  };
}

std::vector<MetricsReport> evaluate_models(const TrainingSet& holdout,
                                           std::span<const NamedPredictor> models) {
  if (holdout.rows.empty()) throw std::invalid_argument("evaluate_models: empty holdout");
  std::vector<int> outcomes;
  std::vector<double> conv;
  for (const auto& row : holdout.rows) {
    outcomes.push_back(row.obs.chosen);
    const auto L = static_cast<std::size_t>(row.obs.calendar.num_options());
    if (conv.size() < L) conv.resize(L, 0.0);
    if (row.obs.chosen > 0) conv[static_cast<std::size_t>(row.obs.chosen - 1)] += 1.0;
  }
  for (double& c : conv) c /= static_cast<double>(holdout.rows.size());

  std::vector<MetricsReport> out;
  for (const auto& m : models) {
    MetricsReport rep;
    rep.name = m.name;
    rep.rows = holdout.rows.size();
    rep.conversion_rate = conv;
    std::vector<std::vector<double>> preds;
    preds.reserve(holdout.rows.size());
    for (const auto& row : holdout.rows) {
      preds.push_back(m.predict(row));
      rep.nll -= std::log(std::max(preds.back()[row.obs.chosen], 1e-300));
    }
    rep.brier = brier_score(preds, outcomes);
    out.push_back(std::move(rep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// A/B

double realized_objective(const ChoiceRecord& r, double alpha) {
  if (r.chosen == 0 || r.canceled) return 0.0;
  const auto& o = r.options[static_cast<std::size_t>(r.chosen - 1)];
  const double p = to_major(o.price), c = to_major(o.cost);
  return (1.0 - alpha) * (p - c) + alpha * c;
}

WelchTest welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test: need >= 2 per arm");
  auto moments = [](std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  WelchTest w;
  w.difference = ma - mb;
  const double qa = va / na, qb = vb / nb;
  w.std_error = std::sqrt(qa + qb);
  if (w.std_error == 0.0) {
    w.df = na + nb - 2.0;
    w.t = w.difference == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), w.difference);
    w.p_value = w.difference == 0.0 ? 1.0 : 0.0;
    return w;
  }
  w.t = w.difference / w.std_error;
  w.df = (qa + qb) * (qa + qb) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  const boost::math::students_t dist(w.df);
  w.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(w.t)));
  return w;
}

namespace {

bool in_arm_a(std::uint64_t seed, std::uint64_t index, double split) {
  Rng rng(derive_seed(seed, kArmStream, index));
  return rng.bernoulli(split);
}

ArmReport arm_report(const std::vector<const ChoiceRecord*>& rows, std::span<const double> values) {
  ArmReport a;
  a.quotes = rows.size();
  const double n = static_cast<double>(rows.size());
  a.mean_objective = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean_objective) * (v - a.mean_objective);
  a.sd_objective = rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  double conv = 0.0, canc = 0.0;
  for (const auto* r : rows) {
    conv += r->chosen > 0 ? 1.0 : 0.0;
    canc += r->canceled ? 1.0 : 0.0;
  }
  a.conversion_rate = conv / n;
  a.cancel_rate = conv > 0.0 ? canc / conv : 0.0;
  return a;
}

}  // namespace

ABReport ab_compare(const GroundTruth& truth, const PricingFn& policy_a, const PricingFn& policy_b,
                    std::size_t n, double split, double alpha, const SimConfig& config) {
  if (!(split > 0.0 && split < 1.0)) throw std::invalid_argument("split must be in (0, 1)");
  const std::uint64_t seed = config.seed;
  const PricingFn dispatch = [&](const QuoteContext& ctx) {
    return in_arm_a(seed, ctx.index, split) ? policy_a(ctx) : policy_b(ctx);
  };
  const SimLog log = generate_quotes(truth, n, dispatch, config);
  std::vector<const ChoiceRecord*> ra, rb;
  std::vector<double> va, vb;
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto& r = log.records[k];
    const bool a = in_arm_a(seed, config.first_index + k, split);
    (a ? ra : rb).push_back(&r);
    (a ? va : vb).push_back(realized_objective(r, alpha));
  }
  if (ra.empty() || rb.empty()) throw std::invalid_argument("ab_compare: an arm received no quotes");
  ABReport rep;
  rep.a = arm_report(ra, va);
  rep.b = arm_report(rb, vb);
  rep.test = welch_t_test(va, vb);
  return rep;
}

// ---------------------------------------------------------------------------
// Legacy baseline

LegacyModel LegacyModel::fit(std::span<const ChoiceRecord> log, int num_options) {
  LegacyModel m;
  m.a_.assign(static_cast<std::size_t>(num_options), -10.0);
  m.b_.assign(static_cast<std::size_t>(num_options), 1e-4);
  for (int i = 1; i <= num_options; ++i) {
    LogitDesign design(2);
    std::size_t buys = 0;
    std::set<std::int64_t> prices;
    for (const auto& r : log) {
      if (static_cast<int>(r.options.size()) < i || !r.options[i - 1].available) continue;
      const double row[2] = {1.0, -to_major(r.options[i - 1].price)};
      design.add_situation(row, r.chosen == i ? 0 : -1);
      buys += r.chosen == i ? 1 : 0;
      if (prices.size() < 2) prices.insert(r.options[i - 1].price);
    }
    if (buys == 0 || buys == design.size() || prices.size() < 2) continue;
    const double inf = std::numeric_limits<double>::infinity();
    Eigen::Vector2d lower(-inf, 1e-4), upper(inf, inf), start(0.0, 1e-4);
    const auto rows = all_rows(design);
    const BoxFitResult fit = fit_logit_box(design, rows, lower, upper, start, BoxFitConfig{});
    m.a_[i - 1] = fit.theta[0];
    m.b_[i - 1] = fit.theta[1];
  }
  return m;
}

std::vector<double> LegacyModel::prices(std::span<const double> costs, const Guardrails& guardrails,
                                        int grid_points) const {
  std::vector<double> out(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double lo = guardrails.floor[i], hi = guardrails.ceiling[i];
    const double a = i < a_.size() ? a_[i] : -10.0;
    const double b = i < b_.size() ? b_[i] : 1e-4;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid_points; ++k) {
      const double p = grid_points > 1 ? lo + (hi - lo) * k / (grid_points - 1) : lo;
      const double v = (p - costs[i]) / (1.0 + std::exp(-(a - b * p)));
      if (v > best) {
        best = v;
        out[i] = p;
      }
    }
  }
  return out;
}

PricingFn legacy_policy(LegacyModel model, Guardrails guardrails) {
  return [m = std::move(model), g = std::move(guardrails)](const QuoteContext& ctx) {
    return m.prices(*ctx.costs, g);
  };
}

}  // namespace schedprice
