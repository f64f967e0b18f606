// Command-line front end: simulate, train, quote, serve, evaluate, ab-test.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "schedprice/artifact.hpp"
#include "schedprice/quote_service.hpp"
#include "schedprice/server.hpp"
#include "schedprice/simulator.hpp"

using namespace schedprice;

namespace {

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    return buf.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct SimOpts {
  std::string scenario = "reference";
  int options = 14;
  std::size_t n = 10000;
  std::uint64_t seed = 1;
  bool windows = false;
  double markup_lo = 0.0;
  double markup_hi = 20.0;
  std::string artifact;
  std::string out = "-";
};

struct TrainOpts {
  std::string log;
  std::string out;
  int weeks = 8;
  double fraction = 0.5;
  std::uint64_t seed = 1;
  int depth = 3;
  std::size_t min_leaf = 100;
  double min_gain = 2.0;
  double alpha = 0.0;
  int m1_points = 41;
  int m2_points = 41;
  std::string guardrails;
  std::string costs;
  std::string as_of;
  bool no_cancellation = false;
};

struct AbOpts {
  std::string scenario = "reference";
  int options = 7;
  std::size_t explore_n = 50000;
  std::size_t n = 200000;
  double split = 0.5;
  std::uint64_t seed = 1;
  double alpha = 0.0;
};

int run_simulate(const SimOpts& o) {
  const GroundTruth truth = make_scenario(o.scenario, o.options, o.windows);
  SimConfig cfg;
  cfg.seed = o.seed;
  std::unique_ptr<QuoteEngine> engine;
  PricingFn pricing = random_markup_policy(o.markup_lo, o.markup_hi);
  if (!o.artifact.empty()) {
    engine = std::make_unique<QuoteEngine>(
        std::make_shared<const ModelArtifact>(load_artifact(o.artifact)), true);
    pricing = engine->policy();
    cfg.window_pricing = engine->window_policy();
  }
  const SimLog log = generate_quotes(truth, o.n, pricing, cfg);
  if (o.out == "-") {
    for (const auto& r : log.records) std::cout << to_json_line(r) << '\n';
  } else {
    write_log(o.out, log.records);
  }
  std::cerr << "quotes " << log.quotes << " conversions " << log.conversions << " cancellations "
            << log.cancellations << '\n';
  return 0;
}

int run_train(const TrainOpts& o) {
  const IngestResult in = ingest(o.log);
  for (const auto& r : in.rejected) std::cerr << "line " << r.line << ": " << r.message << '\n';
  TrainConfig cfg;
  cfg.window_weeks = o.weeks;
  cfg.subsample = o.fraction;
  cfg.seed = o.seed;
  cfg.tree.max_depth = o.depth;
  cfg.tree.min_leaf_samples = o.min_leaf;
  cfg.tree.min_split_gain = o.min_gain;
  cfg.objective.alpha = o.alpha;
  cfg.objective.include_cancellation = !o.no_cancellation;
  cfg.grid.m1_points = o.m1_points;
  cfg.grid.m2_points = o.m2_points;
  if (!o.guardrails.empty()) cfg.guardrails = parse_guardrails(read_file(o.guardrails));
  if (!o.costs.empty()) cfg.costs = CostTable::from_csv(read_file(o.costs));
  if (!o.as_of.empty()) cfg.as_of = parse_utc(o.as_of);
  const TrainResult res = train(in.records, cfg);
  save_artifact(o.out, res.artifact);
  std::cerr << "rows in window " << res.report.rows_in_window << ", used " << res.report.rows_used
            << ", segments " << res.report.leaves << ", model " << res.artifact.model_version << '\n';
  for (const auto& w : res.report.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int run_quote(const std::string& artifact, const std::string& request) {
  const QuoteEngine engine(std::make_shared<const ModelArtifact>(load_artifact(artifact)));
  std::cout << to_json(engine.quote(parse_quote_request(read_file(request)))) << '\n';
  return 0;
}

int run_serve(const std::string& artifact, const ServerConfig& cfg) {
  QuoteServer server(artifact, cfg);
  const int port = server.bind();
  std::cerr << "serving " << artifact << " on " << cfg.host << ':' << port << '\n';
  server.run();
  return 0;
}

void print_reports(const std::vector<MetricsReport>& reports) {
  std::printf("%-16s %10s %14s %10s\n", "model", "rows", "nll", "brier");
  for (const auto& r : reports) {
    std::printf("%-16s %10zu %14.3f %10.5f\n", r.name.c_str(), r.rows, r.nll, r.brier);
  }
}

int run_evaluate(const std::string& train_log, const std::string& holdout_log,
                 const std::string& artifact) {
  const auto train_in = ingest(train_log);
  const auto hold_in = ingest(holdout_log);
  const TrainingSet train_set = to_training_set(train_in.records);
  const TrainingSet holdout = to_training_set(hold_in.records, train_set.schema);
  int L = 0;
  for (const auto& r : train_in.records) L = std::max(L, static_cast<int>(r.options.size()));
  const BucketMap buckets = BucketMap::default_for(L);
  MnlFitConfig vanilla;
  vanilla.reference_effects = false;
  std::vector<NamedPredictor> models = {
      {"naive", naive_predictor(NaiveModel::fit(train_set))},
      {"vanilla_mnl", mnl_predictor(fit_mle(train_set.observations(), buckets, vanilla).params)}};
  if (!artifact.empty()) {
    const ModelArtifact a = load_artifact(artifact);
    const TrainingSet framed = to_training_set(hold_in.records, a.tree.schema());
    // The artifact encodes features with its own schema.
    auto reports = evaluate_models(holdout, models);
    const NamedPredictor fw{"framework", tree_predictor(a.tree)};
    reports.push_back(evaluate_models(framed, std::span<const NamedPredictor>(&fw, 1)).front());
    print_reports(reports);
    return 0;
  }
  models.push_back({"framework", tree_predictor(fit_tree(train_set, TreeHyperparams{}, buckets))});
  print_reports(evaluate_models(holdout, models));
  return 0;
}

int run_ab(const AbOpts& o) {
  const GroundTruth truth = make_scenario(o.scenario, o.options);
  SimConfig explore;
  explore.seed = derive_seed(o.seed, 1);
  const SimLog log = generate_quotes(truth, o.explore_n, random_markup_policy(0.0, 20.0), explore);

  TrainConfig cfg;
  cfg.subsample = 1.0;
  cfg.seed = o.seed;
  cfg.costs = truth.costs;
  cfg.objective.alpha = o.alpha;
  cfg.guardrails = Guardrails::uniform(o.options, 0.0, 80.0);
  const TrainResult fw = train(log.records, cfg);
  const QuoteEngine engine(std::make_shared<const ModelArtifact>(fw.artifact), true);
  const LegacyModel legacy = LegacyModel::fit(log.records, o.options);

  SimConfig ab;
  ab.seed = derive_seed(o.seed, 2);
  const ABReport rep = ab_compare(truth, engine.policy(), legacy_policy(legacy, cfg.guardrails), o.n,
                                  o.split, o.alpha, ab);
  std::printf("arm        quotes   mean_objective   conversion   cancel\n");
  std::printf("framework  %7zu   %14.4f   %10.4f   %6.4f\n", rep.a.quotes, rep.a.mean_objective,
              rep.a.conversion_rate, rep.a.cancel_rate);
  std::printf("legacy     %7zu   %14.4f   %10.4f   %6.4f\n", rep.b.quotes, rep.b.mean_objective,
              rep.b.conversion_rate, rep.b.cancel_rate);
  std::printf("difference %.4f (se %.4f), t = %.2f, df = %.0f, p = %.3g\n", rep.test.difference,
              rep.test.std_error, rep.test.t, rep.test.df, rep.test.p_value);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lead-time pricing: simulate, train, quote, serve, evaluate, ab-test"};
  app.require_subcommand(1);

  SimOpts sim;
  auto* s = app.add_subcommand("simulate", "Write a synthetic quote log");
  s->add_option("--scenario", sim.scenario, "single | segments | reference")->capture_default_str();
  s->add_option("--options", sim.options, "Lead-time options per quote")->capture_default_str();
  s->add_option("-n,--quotes", sim.n, "Number of quotes")->capture_default_str();
  s->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  s->add_flag("--windows", sim.windows, "Add second-level time windows");
  s->add_option("--markup-lo", sim.markup_lo, "Random markup lower bound")->capture_default_str();
  s->add_option("--markup-hi", sim.markup_hi, "Random markup upper bound")->capture_default_str();
  s->add_option("--artifact", sim.artifact, "Price with this model instead of random markups");
  s->add_option("-o,--out", sim.out, "Output path or - for stdout")->capture_default_str();

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Fit a model artifact from a quote log");
  t->add_option("--log", tr.log, "Quote log (JSONL)")->required();
  t->add_option("-o,--out", tr.out, "Artifact path")->required();
  t->add_option("--weeks", tr.weeks, "Training window in weeks")->capture_default_str();
  t->add_option("--fraction", tr.fraction, "Subsample fraction")->capture_default_str();
  t->add_option("--seed", tr.seed, "Subsample seed")->capture_default_str();
  t->add_option("--depth", tr.depth, "Maximum tree depth")->capture_default_str();
  t->add_option("--min-leaf", tr.min_leaf, "Minimum rows per segment")->capture_default_str();
  t->add_option("--min-gain", tr.min_gain, "Minimum NLL gain per split")->capture_default_str();
  t->add_option("--alpha", tr.alpha, "Objective weight in [0, 1]")->capture_default_str();
  t->add_option("--grid-m1", tr.m1_points, "Minimum-price grid points")->capture_default_str();
  t->add_option("--grid-m2", tr.m2_points, "Markup grid points")->capture_default_str();
  t->add_option("--guardrails", tr.guardrails, "Guardrail JSON (minor units)");
  t->add_option("--costs", tr.costs, "Cost table CSV (minor units)");
  t->add_option("--as-of", tr.as_of, "Window end, YYYY-MM-DDTHH:MM:SSZ");
  t->add_flag("--no-cancellation", tr.no_cancellation, "Ignore cancellations in the objective");

  std::string q_artifact, q_request = "-";
  auto* q = app.add_subcommand("quote", "Price one request");
  q->add_option("--artifact", q_artifact, "Model artifact")->required();
  q->add_option("--request", q_request, "Request JSON path or -")->capture_default_str();

  std::string sv_artifact;
  ServerConfig sv;
  int poll_ms = 50;
  auto* v = app.add_subcommand("serve", "Serve POST /quote and GET /healthz");
  v->add_option("--artifact", sv_artifact, "Model artifact (reloaded on change)")->required();
  v->add_option("--host", sv.host, "Bind address")->capture_default_str();
  v->add_option("--port", sv.port, "Port (0 = any)")->capture_default_str();
  v->add_option("--poll-ms", poll_ms, "Artifact poll interval")->capture_default_str();

  std::string ev_train, ev_holdout, ev_artifact;
  auto* e = app.add_subcommand("evaluate", "NLL and Brier of naive, vanilla MNL and framework");
  e->add_option("--train-log", ev_train, "Training log")->required();
  e->add_option("--holdout-log", ev_holdout, "Holdout log")->required();
  e->add_option("--artifact", ev_artifact, "Evaluate this artifact as the framework model");

  AbOpts ab;
  auto* a = app.add_subcommand("ab-test", "Framework vs legacy pricing on a simulated market");
  a->add_option("--scenario", ab.scenario, "Ground-truth scenario")->capture_default_str();
  a->add_option("--options", ab.options, "Lead-time options")->capture_default_str();
  a->add_option("--explore", ab.explore_n, "Exploration quotes used for training")->capture_default_str();
  a->add_option("-n,--quotes", ab.n, "Quotes in the experiment")->capture_default_str();
  a->add_option("--split", ab.split, "Share of quotes in the framework arm")->capture_default_str();
  a->add_option("--seed", ab.seed, "Master seed")->capture_default_str();
  a->add_option("--alpha", ab.alpha, "Objective weight")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) return run_simulate(sim);
    if (*t) return run_train(tr);
    if (*q) return run_quote(q_artifact, q_request);
    if (*v) {
      sv.poll_interval = std::chrono::milliseconds(poll_ms);
      return run_serve(sv_artifact, sv);
    }
    if (*e) return run_evaluate(ev_train, ev_holdout, ev_artifact);
    if (*a) return run_ab(ab);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
