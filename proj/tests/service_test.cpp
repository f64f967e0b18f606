#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "schedprice/quote_service.hpp"
#include "schedprice/server.hpp"
#include "test_util.hpp"

// After Eigen: resolv.h, pulled in here, defines _res as a macro.
#include <httplib.h>

namespace schedprice {
namespace {

using testing::TempDir;

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    artifact_ = std::make_shared<const ModelArtifact>(testing::small_artifact(111));
  }
  static void TearDownTestSuite() { artifact_.reset(); }

  static QuoteRequest request(const std::string& tier = "premium", double distance = 12.0) {
    QuoteRequest r;
    r.features = {{"tier", tier}, {"distance", distance}, {"region", std::string("north")}};
    r.start_day = DayOfWeek::Thu;
    r.num_options = 5;
    return r;
  }

  static std::shared_ptr<const ModelArtifact> artifact_;
};
std::shared_ptr<const ModelArtifact> ServiceTest::artifact_;

TEST_F(ServiceTest, QuoteComposesTheModelParts) {
  const QuoteEngine engine(artifact_);
  Rng rng(112);
  for (int t = 0; t < 20; ++t) {
    QuoteRequest req = request(rng.bernoulli(0.5) ? "basic" : "premium", rng.uniform(0, 30));
    req.start_day = testing::random_day(rng);
    const LeadTimeCalendar cal = testing::random_calendar(rng, 5);
    req.available = cal.availability();
    const QuoteResponse got = engine.quote(req);

    // Rebuild the pipeline from the artifact's parts.
    const ModelArtifact& a = *artifact_;
    const LeadTimeCalendar calendar(req.start_day, req.available);
    const FeatureVector x = a.tree.schema().encode(req.features);
    const RoutedSegment seg = a.tree.route(x);
    const auto costs = a.costs.expected_costs(req.features, calendar);
    const auto cancel = a.cancellation.cancel_probabilities(x, 5, seg.segment_id);
    ObjectiveEvaluator eval(*seg.params, costs, cancel, calendar, a.objective);
    const PricingResult r = optimize_two_param(eval, a.guardrails, a.grid);
    std::vector<std::int64_t> minor;
    std::vector<double> shown;
    for (double p : r.prices) {
      minor.push_back(to_minor(p));
      shown.push_back(to_major(minor.back()));
    }
    EXPECT_EQ(got.prices, minor);
    // Hand-run of the policy at the reported (m1, m2).
    const auto hand = policy_prices(got.policy, costs, *seg.params, calendar, a.guardrails);
    for (std::size_t i = 0; i < hand.size(); ++i) EXPECT_EQ(to_minor(hand[i]), got.prices[i]);
    EXPECT_EQ(got.segment_id, seg.segment_id);
    EXPECT_EQ(got.policy, r.policy);
    EXPECT_EQ(got.objective, eval(shown));
    EXPECT_EQ(got.model_version, a.model_version);
    for (std::size_t i = 0; i < minor.size(); ++i) {
      EXPECT_GE(shown[i], a.guardrails.floor[i]);
      EXPECT_LE(shown[i], a.guardrails.ceiling[i]);
    }
  }
}

TEST_F(ServiceTest, MemoizedEngineAgrees) {
  const QuoteEngine plain(artifact_), memo(artifact_, true);
  for (double d : {1.0, 5.0, 1.0, 20.0, 5.0}) {
    const auto req = request("basic", d);
    EXPECT_EQ(to_json(memo.quote(req)), to_json(plain.quote(req)));
  }
}

TEST_F(ServiceTest, RejectsRequestsItCannotServe) {
  const QuoteEngine engine(artifact_);
  QuoteRequest req = request();
  req.available = std::vector<bool>(5, false);
  EXPECT_THROW(engine.quote(req), QuoteError);
  req = request();
  req.num_options = 6;
  EXPECT_THROW(engine.quote(req), QuoteError);
  req.num_options = 0;
  EXPECT_THROW(engine.quote(req), QuoteError);
  req = request();
  req.costs = {100, 200};
  EXPECT_THROW(engine.quote(req), QuoteError);
  req.costs = {100, 200, -1, 100, 100};
  EXPECT_THROW(engine.quote(req), QuoteError);
  req = request();
  req.available = {true, false};
  EXPECT_THROW(engine.quote(req), QuoteError);

  ModelArtifact flat = *artifact_;
  flat.window_model.reset();
  flat.window_catalog.reset();
  req = request();
  req.second_level = true;
  EXPECT_THROW(QuoteEngine(std::make_shared<const ModelArtifact>(flat)).quote(req), QuoteError);
}

TEST_F(ServiceTest, DegenerateGuardrailsPinPrices) {
  ModelArtifact pinned = *artifact_;
  pinned.guardrails.floor = {5.0, 6.0, 7.0, 8.0, 9.5};
  pinned.guardrails.ceiling = pinned.guardrails.floor;
  const QuoteEngine engine(std::make_shared<const ModelArtifact>(pinned));
  EXPECT_EQ(engine.quote(request()).prices, (std::vector<std::int64_t>{500, 600, 700, 800, 950}));
}

TEST_F(ServiceTest, SecondLevelPinsCheapestWindow) {
  const QuoteEngine engine(artifact_);
  QuoteRequest req = request();
  req.second_level = true;
  req.available = {true, false, true, true, true};
  const int M = artifact_->window_model->num_windows();
  Rng rng(113);
  for (int i = 0; i < 5; ++i) {
    std::vector<std::int64_t> row;
    for (int j = 0; j < M; ++j) row.push_back(200 + static_cast<std::int64_t>(rng.below(400)));
    req.window_costs.push_back(row);
  }
  const QuoteResponse r = engine.quote(req);
  ASSERT_EQ(r.window_prices.size(), 5u);
  EXPECT_TRUE(r.window_prices[1].empty());
  for (int i : {0, 2, 3, 4}) {
    const auto& w = r.window_prices[i];
    ASSERT_EQ(static_cast<int>(w.size()), M);
    const auto& c = req.window_costs[i];
    const auto cheapest = std::min_element(c.begin(), c.end()) - c.begin();
    EXPECT_EQ(w[cheapest], r.prices[i]);
    EXPECT_EQ(*std::min_element(w.begin(), w.end()), r.prices[i]);
  }
  req.window_costs[0].pop_back();
  EXPECT_THROW(engine.quote(req), QuoteError);
}

TEST_F(ServiceTest, JsonContracts) {
  QuoteRequest req = request();
  req.available = {true, true, false, true, true};
  req.costs = {100, 150, 200, 250, 300};
  req.second_level = true;
  const QuoteRequest back = parse_quote_request(to_json(req));
  EXPECT_EQ(to_json(back), to_json(req));
  const QuoteResponse resp = QuoteEngine(artifact_).quote(req);
  EXPECT_EQ(to_json(parse_quote_response(to_json(resp))), to_json(resp));
  for (const char* bad : {"", "[]", R"({"features": {}})",
                          R"({"features": {}, "start_day": "Funday", "num_options": 3})",
                          R"({"features": {}, "start_day": "Mon", "num_options": "3"})",
                          R"({"features": {}, "start_day": "Mon", "num_options": 3, "costs": [1.5, 2, 3]})"}) {
    EXPECT_THROW(parse_quote_request(bad), std::invalid_argument) << bad;
  }
}

std::string version_of(httplib::Client& cli) {
  const auto res = cli.Get("/healthz");
  if (!res || res->status != 200) return "";
  return nlohmann::json::parse(res->body).at("model_version").get<std::string>();
}

TEST_F(ServiceTest, ServerAnswersConcurrentlyAndHotReloads) {
  TempDir dir("server");
  const std::string path = dir.file("model.json");
  save_artifact(path, *artifact_);
  ServerConfig cfg;
  cfg.port = 0;
  cfg.poll_interval = std::chrono::milliseconds(10);
  QuoteServer server(path, cfg);
  const int port = server.start();

  httplib::Client cli("127.0.0.1", port);
  EXPECT_EQ(version_of(cli), artifact_->model_version);

  const std::string body = to_json(request());
  const std::string expected = to_json(QuoteEngine(artifact_).quote(request()));
  const auto first = cli.Post("/quote", body, "application/json");
  ASSERT_TRUE(first);
  EXPECT_EQ(first->status, 200);
  EXPECT_EQ(first->body, expected);
  const auto bad = cli.Post("/quote", R"({"features": {}, "start_day": "Mon", "num_options": 99})",
                            "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_NE(bad->body.find("error"), std::string::npos);

  // A second model with a different version, served after an atomic replace.
  ModelArtifact next = *artifact_;
  next.objective.alpha = 0.5;
  const std::string next_version = parse_artifact(serialize(next)).model_version;
  ASSERT_NE(next_version, artifact_->model_version);
  next.model_version = next_version;
  const std::string expected_next = to_json(QuoteEngine(std::make_shared<const ModelArtifact>(next)).quote(request()));

  std::atomic<bool> swapped{false};
  std::atomic<int> failures{0}, old_answers{0}, bad_flips{0};
  std::vector<std::thread> clients;
  for (int t = 0; t < 3; ++t) {
    clients.emplace_back([&] {
      httplib::Client c("127.0.0.1", port);
      int flips = 0, after_swap = 0;
      bool on_new = false;
      for (int k = 0; k < 2000 && (k < 40 || after_swap < 5); ++k) {
        if (swapped.load()) ++after_swap;
        const auto res = c.Post("/quote", body, "application/json");
        if (!res || res->status != 200) {
          ++failures;
        } else if (res->body == expected) {
          ++old_answers;
          if (on_new) ++bad_flips;  // went back to the old model
        } else if (res->body == expected_next) {
          if (!on_new) ++flips;
          on_new = true;
        } else {
          ++failures;
        }
      }
      if (flips != 1) ++bad_flips;
    });
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  save_artifact(path, next);
  for (int k = 0; k < 500 && version_of(cli) != next_version; ++k) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  swapped = true;
  for (auto& c : clients) c.join();
  EXPECT_EQ(version_of(cli), next_version);
  EXPECT_EQ(failures.load(), 0);
  EXPECT_GT(old_answers.load(), 0);
  EXPECT_EQ(bad_flips.load(), 0);  // each client flips exactly once
  EXPECT_EQ(server.models().reloads(), 1u);
  const auto after = cli.Post("/quote", body, "application/json");
  ASSERT_TRUE(after);
  EXPECT_EQ(after->body, expected_next);

  // A broken file is skipped and the current model stays up.
  {
    std::ofstream out(dir.file("broken.json"));
    out << "{ not an artifact";
  }
  std::filesystem::rename(dir.file("broken.json"), path);
  for (int k = 0; k < 500 && server.models().failed_reloads() == 0; ++k) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  EXPECT_EQ(server.models().failed_reloads(), 1u);
  EXPECT_EQ(version_of(cli), next_version);
  server.stop();
}

}  // namespace
}  // namespace schedprice
