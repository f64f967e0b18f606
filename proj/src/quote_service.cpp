#include "schedprice/quote_service.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

namespace schedprice {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON

QuoteRequest parse_quote_request(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw QuoteError(std::string("request is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw QuoteError("request must be a JSON object");
  try {
    QuoteRequest r;
    if (j.contains("features")) {
      if (!j.at("features").is_object()) throw QuoteError("'features' must be an object");
      for (const auto& [name, v] : j.at("features").items()) {
        if (v.is_number()) {
          r.features[name] = v.get<double>();
        } else if (v.is_string()) {
          r.features[name] = v.get<std::string>();
        } else {
          throw QuoteError("feature '" + name + "' must be a number or a string");
        }
      }
    }
    r.start_day = parse_day_of_week(j.at("start_day_of_week").get<std::string>());
    r.num_options = j.at("num_options").get<int>();
    if (j.contains("available")) r.available = j.at("available").get<std::vector<bool>>();
    if (j.contains("costs")) r.costs = j.at("costs").get<std::vector<std::int64_t>>();
    if (j.contains("second_level")) r.second_level = j.at("second_level").get<bool>();
    if (j.contains("window_costs")) {
      r.window_costs = j.at("window_costs").get<std::vector<std::vector<std::int64_t>>>();
    }
    return r;
  } catch (const json::exception& e) {
    throw QuoteError(std::string("malformed request: ") + e.what());
  } catch (const QuoteError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw QuoteError(e.what());
  }
}

std::string to_json(const QuoteRequest& r) {
  json f = json::object();
  for (const auto& [name, v] : r.features) {
    if (const auto* d = std::get_if<double>(&v)) {
      f[name] = *d;
    } else {
      f[name] = std::get<std::string>(v);
    }
  }
  json j = {{"features", f},
            {"start_day_of_week", std::string(to_string(r.start_day))},
            {"num_options", r.num_options},
            {"second_level", r.second_level}};
  if (!r.available.empty()) j["available"] = r.available;
  if (!r.costs.empty()) j["costs"] = r.costs;
  if (!r.window_costs.empty()) j["window_costs"] = r.window_costs;
  return j.dump();
}

std::string to_json(const QuoteResponse& r) {
  json j = {{"prices", r.prices},
            {"segment_id", r.segment_id},
            {"model_version", r.model_version},
            {"policy", {{"m1", r.policy.m1}, {"m2", r.policy.m2}}},
            {"objective", r.objective}};
  if (!r.window_prices.empty()) j["window_prices"] = r.window_prices;
  return j.dump();
}

QuoteResponse parse_quote_response(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    QuoteResponse r;
    r.prices = j.at("prices").get<std::vector<std::int64_t>>();
    r.segment_id = j.at("segment_id").get<int>();
    r.model_version = j.at("model_version").get<std::string>();
    r.policy.m1 = j.at("policy").at("m1").get<double>();
    r.policy.m2 = j.at("policy").at("m2").get<double>();
    r.objective = j.at("objective").get<double>();
    if (j.contains("window_prices")) {
      r.window_prices = j.at("window_prices").get<std::vector<std::vector<std::int64_t>>>();
    }
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed quote response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Engine

namespace {

Guardrails prefix(const Guardrails& g, int L) {
  Guardrails out;
  out.floor.assign(g.floor.begin(), g.floor.begin() + L);
  out.ceiling.assign(g.ceiling.begin(), g.ceiling.begin() + L);
  return out;
}

std::string cache_key(int segment, const LeadTimeCalendar& cal, const std::vector<double>& costs,
                      const std::vector<double>& cancel) {
  std::ostringstream os;
  os << std::hexfloat << segment << '|' << static_cast<int>(cal.start_day()) << '|';
  for (bool a : cal.availability()) os << (a ? '1' : '0');
  for (double c : costs) os << ',' << c;
  os << '|';
  for (double q : cancel) os << ',' << q;
  return os.str();
}

// Window prices in minor units with the cheapest-cost window pinned at the
// displayed price.
std::vector<std::int64_t> window_prices_minor(std::int64_t first_minor,
                                              const std::vector<double>& window_costs,
                                              const WindowMnlParams& params,
                                              const std::vector<double>& x, double ceiling) {
  const WindowPricing wp = price_windows(to_major(first_minor), window_costs, params, x, ceiling);
  const auto pinned = static_cast<std::size_t>(
      std::min_element(window_costs.begin(), window_costs.end()) - window_costs.begin());
  std::vector<std::int64_t> out(window_costs.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = j == pinned ? first_minor : std::max(first_minor, to_minor(wp.prices[j]));
  }
  return out;
}

}  // namespace

QuoteEngine::QuoteEngine(std::shared_ptr<const ModelArtifact> artifact, bool memoize)
    : artifact_(std::move(artifact)), memoize_(memoize) {
  if (!artifact_) throw std::invalid_argument("QuoteEngine needs an artifact");
}

QuoteResponse QuoteEngine::quote(const QuoteRequest& req) const {
  const ModelArtifact& a = *artifact_;
  const int L = req.num_options;
  if (L < 1 || L > a.num_options) {
    throw QuoteError("num_options must be in [1, " + std::to_string(a.num_options) + "]");
  }
  std::vector<bool> avail = req.available;
  if (avail.empty()) avail.assign(static_cast<std::size_t>(L), true);
  if (static_cast<int>(avail.size()) != L) throw QuoteError("'available' needs num_options entries");
  if (std::none_of(avail.begin(), avail.end(), [](bool b) { return b; })) {
    throw QuoteError("no option is available");
  }
  const LeadTimeCalendar calendar(req.start_day, avail);

  FeatureVector x;
  try {
    x = a.tree.schema().encode(req.features);
  } catch (const std::invalid_argument& e) {
    throw QuoteError(e.what());
  }
  const RoutedSegment seg = a.tree.route(x);

  std::vector<double> costs;
  if (!req.costs.empty()) {
    if (static_cast<int>(req.costs.size()) != L) throw QuoteError("'costs' needs num_options entries");
    for (auto c : req.costs) {
      if (c < 0) throw QuoteError("costs must be >= 0");
      costs.push_back(to_major(c));
    }
  } else {
    try {
      costs = a.costs.expected_costs(req.features, calendar);
    } catch (const std::invalid_argument& e) {
      throw QuoteError(e.what());
    }
  }
  const std::vector<double> cancel = a.cancellation.cancel_probabilities(x, L, seg.segment_id);
  const Guardrails guard = prefix(a.guardrails, L);
  ObjectiveEvaluator objective(*seg.params, costs, cancel, calendar, a.objective);

  Priced priced;
  const std::string key = memoize_ ? cache_key(seg.segment_id, calendar, costs, cancel) : "";
  bool hit = false;
  if (memoize_) {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      priced = it->second;
      hit = true;
    }
  }
  if (!hit) {
    GridConfig grid = a.grid;
    if (memoize_) grid.parallel = false;
    const PricingResult r = optimize_two_param(objective, guard, grid);
    priced = {r.policy, r.prices};
    if (memoize_) {
      std::lock_guard lock(cache_mutex_);
      cache_.emplace(key, priced);
    }
  }

  QuoteResponse resp;
  resp.segment_id = seg.segment_id;
  resp.model_version = a.model_version;
  resp.policy = priced.policy;
  std::vector<double> shown(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    resp.prices.push_back(to_minor(priced.prices[i]));
    shown[i] = to_major(resp.prices.back());
  }
  resp.objective = objective(shown);

  if (req.second_level) {
    if (!a.window_model) throw QuoteError("artifact has no second-level model");
    const WindowMnlParams& wm = *a.window_model;
    const auto M = static_cast<std::size_t>(wm.num_windows());
    if (!req.window_costs.empty() && static_cast<int>(req.window_costs.size()) != L) {
      throw QuoteError("'window_costs' needs num_options rows");
    }
    const std::vector<double> numeric = a.tree.schema().numeric_values(x);
    resp.window_prices.resize(static_cast<std::size_t>(L));
    for (int i = 1; i <= L; ++i) {
      if (!avail[i - 1]) continue;
      std::vector<double> wc(M, to_major(to_minor(costs[i - 1])));
      if (!req.window_costs.empty()) {
        const auto& row = req.window_costs[i - 1];
        if (row.size() != M) throw QuoteError("window_costs rows need one entry per window");
        for (std::size_t j = 0; j < M; ++j) {
          if (row[j] < 0) throw QuoteError("window costs must be >= 0");
          wc[j] = to_major(row[j]);
        }
      }
      resp.window_prices[i - 1] = window_prices_minor(resp.prices[i - 1], wc, wm,
                                                      window_features(numeric, i),
                                                      guard.ceiling[i - 1]);
    }
  }
  return resp;
}

PricingFn QuoteEngine::policy() const {
  return [this](const QuoteContext& ctx) {
    QuoteRequest req;
    req.features = *ctx.raw;
    req.start_day = ctx.calendar->start_day();
    req.num_options = ctx.calendar->num_options();
    req.available = ctx.calendar->availability();
    for (double c : *ctx.costs) req.costs.push_back(to_minor(c));
    const QuoteResponse resp = quote(req);
    std::vector<double> p;
    for (auto v : resp.prices) p.push_back(to_major(v));
    return p;
  };
}

WindowPricingFn QuoteEngine::window_policy() const {
  return [this](const QuoteContext& ctx, int lead_time, double first_level_price,
                std::span<const double> costs) {
    const ModelArtifact& a = *artifact_;
    if (!a.window_model) return std::vector<double>(costs.size(), first_level_price);
    const auto numeric = a.tree.schema().numeric_values(a.tree.schema().encode(*ctx.raw));
    const std::vector<double> wc(costs.begin(), costs.end());
    const auto minor = window_prices_minor(to_minor(first_level_price), wc, *a.window_model,
                                           window_features(numeric, lead_time),
                                           a.guardrails.ceiling[lead_time - 1]);
    std::vector<double> p;
    for (auto v : minor) p.push_back(to_major(v));
    return p;
  };
}

}  // namespace schedprice
