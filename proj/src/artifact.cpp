#include "schedprice/artifact.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "schedprice/rng.hpp"

namespace schedprice {

using nlohmann::json;

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

constexpr std::uint64_t kImputeSeedStream = 0x1397u;

// ---------------------------------------------------------------------------
// To JSON

json buckets_json(const BucketMap& b) {
  const char* kind = b.kind() == BucketMap::Kind::Single        ? "single"
                     : b.kind() == BucketMap::Kind::WeekdayRuns ? "weekday_runs"
                                                                : "by_index";
  return {{"kind", kind}, {"values", b.values()}};
}

json params_json(const MnlParams& p) {
  return {{"alpha", {p.alpha1, p.alpha2, p.alpha3}}, {"beta", p.beta}, {"gamma", p.gamma}};
}

json schema_json(const FeatureSchema& s) {
  json a = json::array();
  for (const auto& f : s.specs()) {
    a.push_back({{"name", f.name},
                 {"kind", f.kind == FeatureKind::Numeric ? "numeric" : "categorical"},
                 {"vocabulary", f.vocabulary}});
  }
  return a;
}

json hyper_json(const TreeHyperparams& h) {
  return {{"max_depth", h.max_depth},
          {"min_leaf_samples", h.min_leaf_samples},
          {"min_split_gain", h.min_split_gain},
          {"max_thresholds", h.max_thresholds},
          {"candidate_tol", h.candidate_tol},
          {"candidate_max_iter", h.candidate_max_iter},
          {"leaf_grad_tol", h.leaf_fit.grad_tol},
          {"leaf_max_iter", h.leaf_fit.max_iter},
          {"leaf_beta_lower", h.leaf_fit.beta_lower},
          {"leaf_reference_effects", h.leaf_fit.reference_effects}};
}

json tree_json(const SegmentationTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes()) {
    json j = {{"is_leaf", n.is_leaf},     {"depth", n.depth},
              {"rows", n.rows},           {"train_nll", n.train_nll},
              {"params", params_json(n.params)}};
    if (!n.is_leaf) {
      j["rule"] = {{"feature", n.rule.feature},
                   {"kind", n.rule.kind == FeatureKind::Numeric ? "numeric" : "categorical"},
                   {"threshold", n.rule.threshold},
                   {"symbol", n.rule.symbol}};
      j["left"] = n.left;
      j["right"] = n.right;
      j["left_rows"] = n.left_rows;
      j["right_rows"] = n.right_rows;
    }
    nodes.push_back(std::move(j));
  }
  return {{"hyperparams", hyper_json(t.hyperparams())},
          {"construction_nll", t.construction_nll()},
          {"nodes", std::move(nodes)}};
}

const char* encoding_name(OptionEncoding e) {
  switch (e) {
    case OptionEncoding::None: return "none";
    case OptionEncoding::Linear: return "linear";
    case OptionEncoding::OneHot: return "one_hot";
  }
  return "none";
}

json logistic_json(const LogisticCoefficients& c) {
  json j = {{"intercept", c.intercept},
            {"encoding", encoding_name(c.encoding)},
            {"option_effect", c.option_effect},
            {"numeric_effect", c.numeric_effect}};
  j["constant_rate"] = c.constant_rate ? json(*c.constant_rate) : json(nullptr);
  return j;
}

json cancellation_json(const CancellationModel& m) {
  json segs = json::array();
  for (const auto& [id, c] : m.by_segment()) segs.push_back({{"segment", id}, {"model", logistic_json(c)}});
  return {{"schema", schema_json(m.schema())}, {"global", logistic_json(m.global())}, {"segments", segs}};
}

json costs_json(const CostTable& t) {
  json curves = json::array();
  for (const auto& [k, c] : t.curves()) curves.push_back({{"key", k}, {"costs", c}});
  return {{"key_features", t.key_features()}, {"fallback", t.fallback_curve()}, {"curves", curves}};
}

json range_json(const std::optional<std::pair<double, double>>& r) {
  if (!r) return nullptr;
  return {r->first, r->second};
}

json content_json(const ModelArtifact& a) {
  json j;
  j["schema_version"] = a.schema_version;
  j["trained_at"] = format_utc(a.trained_at);
  j["training_window"] = {{"start", format_utc(a.window_start)},
                          {"end", format_utc(a.window_end)},
                          {"weeks", a.window_weeks}};
  j["subsample"] = {{"fraction", a.subsample_fraction}, {"seed", a.seed}};
  j["num_options"] = a.num_options;
  j["buckets"] = buckets_json(a.buckets);
  j["features"] = schema_json(a.tree.schema());
  j["tree"] = tree_json(a.tree);
  j["cancellation"] = cancellation_json(a.cancellation);
  j["costs"] = costs_json(a.costs);
  if (a.window_catalog && a.window_model) {
    json cat = json::array();
    for (const auto& w : a.window_catalog->windows()) {
      cat.push_back({{"start_hour", w.start_hour}, {"length_hours", w.length_hours}});
    }
    const auto& p = *a.window_model;
    j["second_level"] = {
        {"windows", cat},
        {"model", {{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"delta", p.delta}}}};
  } else {
    j["second_level"] = nullptr;
  }
  j["guardrails"] = {{"floor", a.guardrails.floor}, {"ceiling", a.guardrails.ceiling}};
  j["objective"] = {{"alpha", a.objective.alpha},
                    {"include_cancellation", a.objective.include_cancellation},
                    {"reference", a.objective.reference == ReferenceMode::Recompute
                                      ? "recompute"
                                      : "frozen_at_cost_plus"}};
  j["grid"] = {{"m1_points", a.grid.m1_points},
               {"m2_points", a.grid.m2_points},
               {"m1_range", range_json(a.grid.m1_range)},
               {"m2_range", range_json(a.grid.m2_range)},
               {"refine", a.grid.refine},
               {"refine_factor", a.grid.refine_factor},
               {"refine_halfwidth", a.grid.refine_halfwidth},
               {"parallel", a.grid.parallel}};
  return j;
}

// ---------------------------------------------------------------------------
// From JSON

BucketMap buckets_from(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  auto values = j.at("values").get<std::vector<int>>();
  if (kind == "single") return BucketMap::single();
  if (kind == "weekday_runs") return BucketMap::weekday_runs(std::move(values));
  if (kind == "by_index") return BucketMap::by_index(std::move(values));
  throw std::invalid_argument("unknown bucket kind '" + kind + "'");
}

MnlParams params_from(const json& j, const BucketMap& buckets) {
  MnlParams p;
  const auto a = j.at("alpha").get<std::vector<double>>();
  if (a.size() != 3) throw std::invalid_argument("alpha needs three entries");
  p.alpha1 = a[0];
  p.alpha2 = a[1];
  p.alpha3 = a[2];
  p.beta = j.at("beta").get<std::vector<double>>();
  p.gamma = j.at("gamma").get<std::vector<double>>();
  p.buckets = buckets;
  const auto B = static_cast<std::size_t>(buckets.num_buckets());
  if (p.beta.size() != B || p.gamma.size() != B) {
    throw std::invalid_argument("segment parameters do not match the bucket map");
  }
  return p;
}

FeatureKind kind_from(const json& j) {
  const auto k = j.get<std::string>();
  if (k == "numeric") return FeatureKind::Numeric;
  if (k == "categorical") return FeatureKind::Categorical;
  throw std::invalid_argument("unknown feature kind '" + k + "'");
}

FeatureSchema schema_from(const json& j) {
  std::vector<FeatureSpec> specs;
  for (const auto& f : j) {
    specs.push_back({f.at("name").get<std::string>(), kind_from(f.at("kind")),
                     f.at("vocabulary").get<std::vector<std::string>>()});
  }
  return FeatureSchema(std::move(specs));
}

TreeHyperparams hyper_from(const json& j) {
  TreeHyperparams h;
  h.max_depth = j.at("max_depth").get<int>();
  h.min_leaf_samples = j.at("min_leaf_samples").get<std::size_t>();
  h.min_split_gain = j.at("min_split_gain").get<double>();
  h.max_thresholds = j.at("max_thresholds").get<int>();
  h.candidate_tol = j.at("candidate_tol").get<double>();
  h.candidate_max_iter = j.at("candidate_max_iter").get<int>();
  h.leaf_fit.grad_tol = j.at("leaf_grad_tol").get<double>();
  h.leaf_fit.max_iter = j.at("leaf_max_iter").get<int>();
  h.leaf_fit.beta_lower = j.at("leaf_beta_lower").get<double>();
  h.leaf_fit.reference_effects = j.at("leaf_reference_effects").get<bool>();
  return h;
}

SegmentationTree tree_from(const json& j, const FeatureSchema& schema, const BucketMap& buckets) {
  std::vector<TreeNode> nodes;
  for (const auto& n : j.at("nodes")) {
    TreeNode t;
    t.is_leaf = n.at("is_leaf").get<bool>();
    t.depth = n.at("depth").get<int>();
    t.rows = n.at("rows").get<std::size_t>();
    t.train_nll = n.at("train_nll").get<double>();
    t.params = params_from(n.at("params"), buckets);
    if (!t.is_leaf) {
      const auto& r = n.at("rule");
      t.rule.feature = r.at("feature").get<int>();
      t.rule.kind = kind_from(r.at("kind"));
      t.rule.threshold = r.at("threshold").get<double>();
      t.rule.symbol = r.at("symbol").get<int>();
      t.left = n.at("left").get<int>();
      t.right = n.at("right").get<int>();
      t.left_rows = n.at("left_rows").get<std::size_t>();
      t.right_rows = n.at("right_rows").get<std::size_t>();
    }
    nodes.push_back(std::move(t));
  }
  return SegmentationTree(schema, std::move(nodes), hyper_from(j.at("hyperparams")),
                          j.at("construction_nll").get<std::vector<double>>());
}

LogisticCoefficients logistic_from(const json& j) {
  LogisticCoefficients c;
  if (!j.at("constant_rate").is_null()) c.constant_rate = j.at("constant_rate").get<double>();
  c.intercept = j.at("intercept").get<double>();
  const auto e = j.at("encoding").get<std::string>();
  if (e == "none") {
    c.encoding = OptionEncoding::None;
  } else if (e == "linear") {
    c.encoding = OptionEncoding::Linear;
  } else if (e == "one_hot") {
    c.encoding = OptionEncoding::OneHot;
  } else {
    throw std::invalid_argument("unknown option encoding '" + e + "'");
  }
  c.option_effect = j.at("option_effect").get<std::vector<double>>();
  c.numeric_effect = j.at("numeric_effect").get<std::vector<double>>();
  return c;
}

CancellationModel cancellation_from(const json& j) {
  std::map<int, LogisticCoefficients> segs;
  for (const auto& s : j.at("segments")) segs[s.at("segment").get<int>()] = logistic_from(s.at("model"));
  return CancellationModel(schema_from(j.at("schema")), logistic_from(j.at("global")), std::move(segs));
}

CostTable costs_from(const json& j) {
  CostTable t(j.at("key_features").get<std::vector<std::string>>(),
              j.at("fallback").get<std::vector<double>>());
  for (const auto& c : j.at("curves")) {
    t.add_curve(c.at("key").get<std::vector<std::string>>(), c.at("costs").get<std::vector<double>>());
  }
  return t;
}

std::optional<std::pair<double, double>> range_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw std::invalid_argument("grid range needs two entries");
  return std::pair{v[0], v[1]};
}

ModelArtifact artifact_from(const json& j) {
  ModelArtifact a;
  a.schema_version = j.at("schema_version").get<int>();
  a.trained_at = parse_utc(j.at("trained_at").get<std::string>());
  const auto& w = j.at("training_window");
  a.window_start = parse_utc(w.at("start").get<std::string>());
  a.window_end = parse_utc(w.at("end").get<std::string>());
  a.window_weeks = w.at("weeks").get<int>();
  a.subsample_fraction = j.at("subsample").at("fraction").get<double>();
  a.seed = j.at("subsample").at("seed").get<std::uint64_t>();
  a.num_options = j.at("num_options").get<int>();
  a.buckets = buckets_from(j.at("buckets"));
  const FeatureSchema schema = schema_from(j.at("features"));
  a.tree = tree_from(j.at("tree"), schema, a.buckets);
  a.cancellation = cancellation_from(j.at("cancellation"));
  a.costs = costs_from(j.at("costs"));
  if (!j.at("second_level").is_null()) {
    const auto& s = j.at("second_level");
    std::vector<TimeWindow> cat;
    for (const auto& x : s.at("windows")) {
      cat.push_back({x.at("start_hour").get<int>(), x.at("length_hours").get<int>()});
    }
    a.window_catalog = WindowCatalog(std::move(cat));
    const auto& m = s.at("model");
    WindowMnlParams p;
    p.alpha = m.at("alpha").get<std::vector<double>>();
    p.beta = m.at("beta").get<double>();
    p.gamma = m.at("gamma").get<std::vector<double>>();
    p.delta = m.at("delta").get<double>();
    a.window_model = std::move(p);
  }
  a.guardrails.floor = j.at("guardrails").at("floor").get<std::vector<double>>();
  a.guardrails.ceiling = j.at("guardrails").at("ceiling").get<std::vector<double>>();
  a.guardrails.validate(a.num_options);
  const auto& o = j.at("objective");
  a.objective.alpha = o.at("alpha").get<double>();
  a.objective.include_cancellation = o.at("include_cancellation").get<bool>();
  const auto ref = o.at("reference").get<std::string>();
  if (ref == "recompute") {
    a.objective.reference = ReferenceMode::Recompute;
  } else if (ref == "frozen_at_cost_plus") {
    a.objective.reference = ReferenceMode::FrozenAtCostPlus;
  } else {
    throw std::invalid_argument("unknown reference mode '" + ref + "'");
  }
  const auto& g = j.at("grid");
  a.grid.m1_points = g.at("m1_points").get<int>();
  a.grid.m2_points = g.at("m2_points").get<int>();
  a.grid.m1_range = range_from(g.at("m1_range"));
  a.grid.m2_range = range_from(g.at("m2_range"));
  a.grid.refine = g.at("refine").get<bool>();
  a.grid.refine_factor = g.at("refine_factor").get<int>();
  a.grid.refine_halfwidth = g.at("refine_halfwidth").get<int>();
  a.grid.parallel = g.at("parallel").get<bool>();
  return a;
}

}  // namespace

std::string serialize(const ModelArtifact& artifact) {
  json j = content_json(artifact);
  j["model_version"] = fnv1a_hex(j.dump());
  return j.dump(1) + "\n";
}

ModelArtifact parse_artifact(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("artifact is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version") || !j.at("schema_version").is_number_integer()) {
    throw std::invalid_argument("artifact has no schema_version");
  }
  const int version = j.at("schema_version").get<int>();
  if (version != kArtifactSchemaVersion) {
    throw ArtifactVersionError("artifact schema_version " + std::to_string(version) + ", expected " +
                               std::to_string(kArtifactSchemaVersion));
  }
  if (!j.contains("model_version") || !j.at("model_version").is_string()) {
    throw std::invalid_argument("artifact has no model_version");
  }
  const std::string stored = j.at("model_version").get<std::string>();
  j.erase("model_version");
  if (fnv1a_hex(j.dump()) != stored) {
    throw ArtifactVersionError("artifact content does not match model_version " + stored);
  }
  try {
    ModelArtifact a = artifact_from(j);
    a.model_version = stored;
    return a;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed artifact: ") + e.what());
  }
}

void save_artifact(const std::string& path, const ModelArtifact& artifact) {
  namespace fs = std::filesystem;
  const std::string text = serialize(artifact);
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

ModelArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open artifact '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_artifact(buf.str());
}

Guardrails parse_guardrails(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    Guardrails g;
    for (auto v : j.at("floor").get<std::vector<std::int64_t>>()) g.floor.push_back(to_major(v));
    for (auto v : j.at("ceiling").get<std::vector<std::int64_t>>()) g.ceiling.push_back(to_major(v));
    g.validate(static_cast<int>(g.floor.size()));
    return g;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed guardrails: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(std::span<const ChoiceRecord> records, const TrainConfig& config) {
  if (records.empty()) throw std::invalid_argument("train: no records");
  if (config.window_weeks < 1) throw std::invalid_argument("window_weeks must be >= 1");
  TrainResult result;
  TrainReport& report = result.report;
  ModelArtifact& a = result.artifact;

  std::int64_t newest = std::numeric_limits<std::int64_t>::min();
  for (const auto& r : records) newest = std::max(newest, r.timestamp);
  const std::int64_t as_of = config.as_of.value_or(newest);
  const std::int64_t start = as_of - static_cast<std::int64_t>(config.window_weeks) * 7 * 86400;
  std::vector<ChoiceRecord> window;
  for (const auto& r : records) {
    if (r.timestamp > start && r.timestamp <= as_of) window.push_back(r);
  }
  report.rows_in_window = window.size();
  if (window.size() < config.tree.min_leaf_samples || window.empty()) {
    throw std::invalid_argument("insufficient rows in training window: " +
                                std::to_string(window.size()) + " < " +
                                std::to_string(config.tree.min_leaf_samples));
  }

  const auto keep = subsample_indices(window.size(), config.subsample, config.seed);
  std::vector<ChoiceRecord> used;
  used.reserve(keep.size());
  for (auto k : keep) used.push_back(window[k]);
  report.rows_used = used.size();
  const TrainingSet data = to_training_set(used);

  int L = 0;
  double max_price = 0.0;
  for (const auto& r : window) {
    L = std::max(L, static_cast<int>(r.options.size()));
    for (const auto& o : r.options) max_price = std::max(max_price, to_major(o.price));
  }

  a.trained_at = as_of;
  a.window_start = start;
  a.window_end = as_of;
  a.window_weeks = config.window_weeks;
  a.subsample_fraction = config.subsample;
  a.seed = config.seed;
  a.num_options = L;
  a.buckets = config.buckets.value_or(BucketMap::default_for(L));
  a.tree = fit_tree(data, config.tree, a.buckets);
  report.leaves = a.tree.num_leaves();

  std::vector<CancellationRow> cancel_rows;
  for (const auto& row : data.rows) {
    if (row.obs.chosen > 0) cancel_rows.push_back({row.x, row.obs.chosen, row.canceled});
  }
  a.cancellation = cancel_rows.empty()
                       ? CancellationModel::constant(0.0)
                       : fit_cancellation_model(a.tree, cancel_rows, L,
                                                config.cancel_min_segment_rows, config.cancel);

  if (!config.costs.fallback_curve().empty() || !config.costs.curves().empty()) {
    a.costs = config.costs;
  } else {
    std::vector<double> sum(static_cast<std::size_t>(L), 0.0), cnt(static_cast<std::size_t>(L), 0.0);
    for (const auto& r : window) {
      for (std::size_t i = 0; i < r.options.size(); ++i) {
        sum[i] += static_cast<double>(r.options[i].cost);
        cnt[i] += 1.0;
      }
    }
    std::vector<double> curve(static_cast<std::size_t>(L));
    for (std::size_t i = 0; i < curve.size(); ++i) {
      curve[i] = to_major(std::llround(sum[i] / std::max(cnt[i], 1.0)));
    }
    a.costs = CostTable({}, curve);
  }

  a.guardrails = config.guardrails.floor.empty()
                     ? Guardrails::uniform(L, 0.0, to_major(to_minor(2.0 * max_price)))
                     : config.guardrails;
  a.guardrails.validate(L);
  a.objective = config.objective;
  a.grid = config.grid;

  if (config.second_level) {
    std::vector<SecondLevelObservation> obs;
    std::vector<UnconvertedQuote> unconverted;
    std::size_t M = 0;
    for (std::size_t n = 0; n < used.size(); ++n) {
      const ChoiceRecord& r = used[n];
      if (!r.second_level || r.second_level->windows.empty()) continue;
      const TrainingRow& row = data.rows[n];
      const auto numeric = data.schema.numeric_values(row.x);
      const int clicked = r.second_level->clicked_lead_time;
      if (clicked > 0) {
        auto wp = r.window_prices(clicked);
        if (wp.empty()) continue;
        M = wp.size();
        obs.push_back({window_features(numeric, clicked), std::move(wp),
                       r.second_level->chosen_window, false});
        continue;
      }
      UnconvertedQuote u;
      u.numeric_x = numeric;
      const RoutedSegment seg = a.tree.route(row.x);
      u.first_level_probs =
          choice_probabilities(*seg.params, row.obs.prices, row.obs.reference, row.obs.calendar);
      for (int i = 1; i <= static_cast<int>(r.options.size()); ++i) {
        u.window_prices.push_back(r.window_prices(i));
        if (!u.window_prices.back().empty()) M = u.window_prices.back().size();
      }
      unconverted.push_back(std::move(u));
    }
    if (!obs.empty() || !unconverted.empty()) {
      const ImputeResult imp =
          impute_clicks(unconverted, derive_seed(config.seed, kImputeSeedStream));
      report.imputed_rows = imp.rows.size();
      report.imputation_dropped = imp.dropped_no_purchase_mass + imp.dropped_missing_windows;
      obs.insert(obs.end(), imp.rows.begin(), imp.rows.end());
      report.window_rows = obs.size();
      if (M != 12 && M != 8 && M != 6 && M != 4) {
        report.warnings.push_back("second level skipped: " + std::to_string(M) +
                                  " windows is not a uniform day split");
      } else {
        try {
          const WindowFit fit = fit_window_model(obs, static_cast<int>(M));
          a.window_catalog = WindowCatalog::uniform(24 / static_cast<int>(M));
          a.window_model = fit.params;
        } catch (const UnidentifiableFitError& e) {
          report.warnings.push_back(std::string("second level skipped: ") + e.what());
        }
      }
    }
  }

  a.model_version = parse_artifact(serialize(a)).model_version;
  return result;
}

}  // namespace schedprice
