#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "schedprice/pricer.hpp"
#include "schedprice/rng.hpp"

namespace schedprice::testing {

struct BruteForceResult {
  std::vector<double> prices;
  double objective = -std::numeric_limits<double>::infinity();
  /// Largest objective drop from moving one option one lattice step away
  /// from the optimum; a local Lipschitz slack for "within one step".
  double neighbour_drop = 0.0;
};

/// Exhaustive search over the product of per-option price lists. Ties keep
/// the first vector in odometer order.
inline BruteForceResult brute_force(ObjectiveEvaluator eval,
                                    const std::vector<std::vector<double>>& lattice) {
  const std::size_t L = lattice.size();
  std::vector<std::size_t> idx(L, 0), best_idx(L, 0);
  std::vector<double> p(L);
  BruteForceResult out;
  while (true) {
    for (std::size_t i = 0; i < L; ++i) p[i] = lattice[i][idx[i]];
    const double v = eval(p);
    if (v > out.objective) {
      out.objective = v;
      best_idx = idx;
    }
    std::size_t k = 0;
    while (k < L && ++idx[k] == lattice[k].size()) idx[k++] = 0;
    if (k == L) break;
  }
  out.prices.resize(L);
  for (std::size_t i = 0; i < L; ++i) out.prices[i] = lattice[i][best_idx[i]];
  for (std::size_t i = 0; i < L; ++i) {
    for (int d : {-1, 1}) {
      const auto j = static_cast<std::ptrdiff_t>(best_idx[i]) + d;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(lattice[i].size())) continue;
      std::vector<double> q = out.prices;
      q[i] = lattice[i][static_cast<std::size_t>(j)];
      out.neighbour_drop = std::max(out.neighbour_drop, out.objective - eval(q));
    }
  }
  return out;
}

/// n evenly spaced points on [lo, hi].
inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo + (hi - lo) * k / (n - 1);
  return v;
}

/// A pricing instance whose costs, 1/(beta + gamma), guardrails and grid
/// axes are all multiples of 0.5, so every two-parameter price vector lies
/// exactly on the 0.5-spaced per-option lattice.
struct LatticeInstance {
  MnlParams params;
  std::vector<double> costs;
  std::vector<double> cancel;
  LeadTimeCalendar calendar;
  Guardrails guardrails;
  ObjectiveConfig config;
  GridConfig grid;
  std::vector<std::vector<double>> lattice;
};

inline LatticeInstance lattice_instance(Rng& rng, int L) {
  constexpr double h = 0.5;
  constexpr double top = 20.0;
  LatticeInstance t;
  const int B = L > 1 ? 1 + static_cast<int>(rng.below(2)) : 1;
  std::vector<int> bucket_of(static_cast<std::size_t>(L));
  for (int& b : bucket_of) b = static_cast<int>(rng.below(static_cast<std::uint64_t>(B)));
  bucket_of[0] = 0;
  if (L > 1) bucket_of[L - 1] = B - 1;
  t.params.buckets = BucketMap::by_index(bucket_of);
  t.params.alpha1 = rng.uniform(-0.3, 0.3);
  t.params.alpha2 = rng.uniform(-0.05, 0.05);
  t.params.alpha3 = rng.uniform(1.0, 4.0);
  // beta + gamma in {1/2, 1/4}; both parts dyadic so the sum is exact.
  for (int b = 0; b < B; ++b) {
    const double s = rng.bernoulli(0.5) ? 0.5 : 0.25;
    const double g = s * static_cast<double>(rng.below(3)) / 4.0;
    t.params.beta.push_back(s - g);
    t.params.gamma.push_back(g);
  }
  t.calendar = LeadTimeCalendar(L, static_cast<DayOfWeek>(rng.below(7)));
  t.guardrails.floor.resize(static_cast<std::size_t>(L));
  t.guardrails.ceiling.resize(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    t.costs.push_back(h * static_cast<double>(2 + rng.below(11)));        // 1 .. 6
    t.cancel.push_back(rng.uniform(0.0, 0.3));
    t.guardrails.floor[i] = h * static_cast<double>(rng.below(7));         // 0 .. 3
    t.guardrails.ceiling[i] = top - h * static_cast<double>(rng.below(13));  // 14 .. 20
  }
  t.guardrails.ceiling[rng.below(static_cast<std::uint64_t>(L))] = top;
  t.config.alpha = rng.bernoulli(0.5) ? 0.0 : 0.25 * static_cast<double>(rng.below(4));
  t.config.include_cancellation = true;

  double max_inv = 0.0;
  for (int b = 0; b < B; ++b) max_inv = std::max(max_inv, 1.0 / (t.params.beta[b] + t.params.gamma[b]));
  t.grid.m1_points = static_cast<int>(top / h) + 1;
  t.grid.m1_range = std::pair{0.0, top};
  t.grid.m2_points = static_cast<int>((top + max_inv) / h) + 1;
  t.grid.m2_range = std::pair{-max_inv, top};
  t.grid.refine = false;

  for (int i = 0; i < L; ++i) {
    std::vector<double> axis;
    for (double p = t.guardrails.floor[i]; p <= t.guardrails.ceiling[i]; p += h) axis.push_back(p);
    t.lattice.push_back(std::move(axis));
  }
  return t;
}

inline ObjectiveEvaluator evaluator(const LatticeInstance& t) {
  return ObjectiveEvaluator(t.params, t.costs, t.cancel, t.calendar, t.config);
}

}  // namespace schedprice::testing
