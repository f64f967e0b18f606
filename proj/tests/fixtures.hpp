#pragma once

#include <string>
#include <vector>

#include "schedprice/artifact.hpp"
#include "schedprice/simulator.hpp"

namespace schedprice::testing {

/// Small simulated log with second-level windows.
inline std::vector<ChoiceRecord> small_log(std::size_t n, std::uint64_t seed, int L = 5,
                                           const std::string& scenario = "segments") {
  const GroundTruth truth = make_scenario(scenario, L, true);
  SimConfig cfg;
  cfg.seed = seed;
  return generate_quotes(truth, n, random_markup_policy(1.0, 20.0), cfg).records;
}

/// Training settings sized for unit tests.
inline TrainConfig quick_train_config() {
  TrainConfig cfg;
  cfg.tree.max_depth = 1;
  cfg.tree.max_thresholds = 8;
  cfg.tree.min_leaf_samples = 300;
  cfg.grid.m1_points = 21;
  cfg.grid.m2_points = 21;
  cfg.cancel_min_segment_rows = 200;
  return cfg;
}

inline ModelArtifact small_artifact(std::uint64_t seed = 1) {
  return train(small_log(3000, seed), quick_train_config()).artifact;
}

}  // namespace schedprice::testing
