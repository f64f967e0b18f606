// Serial reference vs OpenMP kernels on the three hot paths: likelihood
// evaluation, the two-parameter price search and quote simulation.

#include <benchmark/benchmark.h>

#include "schedprice/choice_mnl.hpp"
#include "schedprice/pricer.hpp"
#include "schedprice/quote_service.hpp"
#include "schedprice/simulator.hpp"
#include "test_util.hpp"

namespace schedprice {
namespace {

struct DesignFixture {
  LogitDesign design{0};
  std::vector<std::uint32_t> rows;
  Eigen::VectorXd theta;

  explicit DesignFixture(std::size_t n) {
    Rng rng(7);
    const int L = 14;
    const auto buckets = BucketMap::default_for(L);
    const auto truth = testing::random_params(rng, buckets);
    const auto data = testing::simulate_choices(rng, truth, L, n);
    design = build_choice_design(data, buckets);
    rows = all_rows(design);
    theta = truth.pack();
  }
};

void BM_LogitSerial(benchmark::State& state) {
  const DesignFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_logit_serial(f.design, f.rows, f.theta, EvalLevel::Hessian));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LogitParallel(benchmark::State& state) {
  const DesignFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_logit_parallel(f.design, f.rows, f.theta, EvalLevel::Hessian));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_LogitSerial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogitParallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_PriceGrid(benchmark::State& state) {
  Rng rng(8);
  const int L = 14;
  const auto params = testing::random_params(rng, BucketMap::default_for(L));
  const auto costs = testing::random_prices(rng, L, 2.0, 8.0);
  const std::vector<double> cancel(L, 0.1);
  const ObjectiveEvaluator eval(params, costs, cancel, LeadTimeCalendar(L, DayOfWeek::Mon), ObjectiveConfig{});
  const Guardrails guard = Guardrails::uniform(L, 0.0, 60.0);
  GridConfig grid;
  grid.parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(optimize_two_param(eval, guard, grid));
  state.SetLabel(grid.parallel ? "parallel" : "serial");
}

BENCHMARK(BM_PriceGrid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GenerateQuotes(benchmark::State& state) {
  const GroundTruth truth = make_scenario("reference", 14, true);
  SimConfig cfg;
  cfg.parallel = state.range(0) != 0;
  const auto policy = random_markup_policy(1.0, 20.0);
  for (auto _ : state) benchmark::DoNotOptimize(generate_quotes(truth, 20000, policy, cfg));
  state.SetItemsProcessed(state.iterations() * 20000);
  state.SetLabel(cfg.parallel ? "parallel" : "serial");
}

BENCHMARK(BM_GenerateQuotes)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// End-to-end quote at L=14 with 8 windows per lead time and default grids.
void BM_QuoteL14(benchmark::State& state) {
  static const auto artifact = [] {
    const GroundTruth truth = make_scenario("reference", 14, true);
    SimConfig sim;
    const auto log = generate_quotes(truth, 4000, random_markup_policy(1.0, 20.0), sim).records;
    TrainConfig cfg;
    cfg.tree.max_depth = 1;
    return std::make_shared<const ModelArtifact>(train(log, cfg).artifact);
  }();
  const QuoteEngine engine(artifact);
  QuoteRequest req;
  req.features = {{"tier", std::string("premium")}, {"distance", 12.0}, {"region", std::string("south")}};
  req.num_options = 14;
  req.second_level = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(engine.quote(req));
  state.SetLabel(req.second_level ? "with windows" : "first level");
}

BENCHMARK(BM_QuoteL14)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace schedprice

BENCHMARK_MAIN();
