#include "schedprice/pricer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace schedprice {

Guardrails Guardrails::uniform(int num_options, double floor, double ceiling) {
  Guardrails g;
  g.floor.assign(static_cast<std::size_t>(num_options), floor);
  g.ceiling.assign(static_cast<std::size_t>(num_options), ceiling);
  return g;
}

void Guardrails::validate(int num_options) const {
  const auto L = static_cast<std::size_t>(num_options);
  if (floor.size() != L || ceiling.size() != L) {
    throw std::invalid_argument("guardrails must cover " + std::to_string(num_options) +
                                " options");
  }
  for (std::size_t i = 0; i < L; ++i) {
    if (!(floor[i] >= 0.0) || !(floor[i] <= ceiling[i]) || !std::isfinite(ceiling[i])) {
      throw std::invalid_argument("guardrail " + std::to_string(i + 1) +
                                  " needs 0 <= floor <= ceiling");
    }
  }
}

double Guardrails::max_ceiling() const {
  return ceiling.empty() ? 0.0 : *std::max_element(ceiling.begin(), ceiling.end());
}

namespace {

// c_i + 1/(beta_b + gamma_b) per option.
std::vector<double> cost_plus(std::span<const double> costs, const MnlParams& params,
                              const LeadTimeCalendar& calendar) {
  const int L = calendar.num_options();
  if (costs.size() != static_cast<std::size_t>(L)) {
    throw std::invalid_argument("costs must have one entry per option");
  }
  const std::vector<int> b = params.buckets.assign(calendar);
  std::vector<double> base(static_cast<std::size_t>(L));
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto k = static_cast<std::size_t>(b[i]);
    const double s = params.beta[k] + params.gamma[k];
    if (!(s > 0.0)) throw std::invalid_argument("beta + gamma must be positive");
    base[i] = costs[i] + 1.0 / s;
  }
  return base;
}

void apply_policy(double m1, double m2, std::span<const double> base, const Guardrails& g,
                  std::span<double> out) {
  for (std::size_t i = 0; i < base.size(); ++i) {
    out[i] = std::clamp(std::max(m1, base[i] + m2), g.floor[i], g.ceiling[i]);
  }
}

std::vector<double> axis(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo + (hi - lo) * k / (n - 1);
  return v;
}

struct Cell {
  double m1;
  double m2;
  double value;
};

bool better(const Cell& a, const Cell& b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.m1 != b.m1) return a.m1 < b.m1;
  return a.m2 < b.m2;
}

void evaluate_cells(std::vector<Cell>& cells, const ObjectiveEvaluator& objective,
                    std::span<const double> base, const Guardrails& g, bool parallel) {
  const auto n = static_cast<std::ptrdiff_t>(cells.size());
  const std::size_t L = base.size();
  if (!parallel) {
    ObjectiveEvaluator local = objective;
    std::vector<double> prices(L);
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      apply_policy(cells[k].m1, cells[k].m2, base, g, prices);
      cells[k].value = local(prices);
    }
    return;
  }
#pragma omp parallel
  {
    ObjectiveEvaluator local = objective;
    std::vector<double> prices(L);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      apply_policy(cells[k].m1, cells[k].m2, base, g, prices);
      cells[k].value = local(prices);
    }
  }
}

}  // namespace

std::vector<double> policy_prices(const PricingPolicy& policy, std::span<const double> costs,
                                  const MnlParams& params, const LeadTimeCalendar& calendar,
                                  const Guardrails& guardrails) {
  guardrails.validate(calendar.num_options());
  const std::vector<double> base = cost_plus(costs, params, calendar);
  std::vector<double> out(base.size());
  apply_policy(policy.m1, policy.m2, base, guardrails, out);
  return out;
}

ObjectiveEvaluator::ObjectiveEvaluator(MnlParams params, std::vector<double> costs,
                                       std::vector<double> cancel_probs, LeadTimeCalendar calendar,
                                       ObjectiveConfig config)
    : params_(std::move(params)),
      costs_(std::move(costs)),
      calendar_(std::move(calendar)),
      config_(config) {
  const auto L = static_cast<std::size_t>(calendar_.num_options());
  if (costs_.size() != L) throw std::invalid_argument("costs must have one entry per option");
  if (!(config_.alpha >= 0.0 && config_.alpha <= 1.0)) {
    throw std::invalid_argument("alpha must be in [0, 1]");
  }
  for (double c : costs_) {
    if (!std::isfinite(c)) throw std::invalid_argument("costs must be finite");
  }
  execute_.assign(L, 1.0);
  if (config_.include_cancellation) {
    if (cancel_probs.size() != L) {
      throw std::invalid_argument("cancel probabilities must have one entry per option");
    }
    for (std::size_t i = 0; i < L; ++i) {
      if (!(cancel_probs[i] >= 0.0 && cancel_probs[i] <= 1.0)) {
        throw std::invalid_argument("cancel probabilities must be in [0, 1]");
      }
      execute_[i] = 1.0 - cancel_probs[i];
    }
  }
  if (params_.beta.size() != static_cast<std::size_t>(params_.num_buckets()) ||
      params_.gamma.size() != params_.beta.size()) {
    throw std::invalid_argument("params do not match their bucket map");
  }
  if (config_.reference == ReferenceMode::FrozenAtCostPlus) {
    frozen_reference_ = reference_prices(cost_plus(costs_, params_, calendar_), calendar_);
  }
  reference_.resize(L);
  probs_.resize(L + 1);
  buckets_.resize(L);
}

double ObjectiveEvaluator::operator()(std::span<const double> prices) {
  const std::size_t L = costs_.size();
  if (prices.size() != L) throw std::invalid_argument("prices must have one entry per option");
  for (double p : prices) {
    if (!std::isfinite(p)) throw std::invalid_argument("prices must be finite");
  }
  std::span<const double> ref = frozen_reference_;
  if (config_.reference == ReferenceMode::Recompute) {
    reference_prices_into(prices, calendar_, reference_);
    ref = reference_;
  }
  choice_probabilities_into(params_, prices, ref, calendar_, buckets_, probs_);
  const double a = config_.alpha;
  double total = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    const double pr = probs_[i + 1];
    if (pr == 0.0) continue;
    total += pr * ((1.0 - a) * (prices[i] - costs_[i]) + a * costs_[i]) * execute_[i];
  }
  return total;
}

double evaluate_objective(std::span<const double> prices, const MnlParams& params,
                          std::span<const double> costs, std::span<const double> cancel_probs,
                          const LeadTimeCalendar& calendar, const ObjectiveConfig& config) {
  ObjectiveEvaluator eval(params, {costs.begin(), costs.end()},
                          {cancel_probs.begin(), cancel_probs.end()}, calendar, config);
  return eval(prices);
}

PricingResult optimize_two_param(const ObjectiveEvaluator& objective, const Guardrails& guardrails,
                                 const GridConfig& grid) {
  if (grid.m1_points < 1 || grid.m2_points < 1) throw std::invalid_argument("empty pricing grid");
  const MnlParams& params = objective.params();
  guardrails.validate(objective.num_options());
  const std::vector<double> base = cost_plus(objective.costs(), params, objective.calendar());

  double min_sens = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < params.beta.size(); ++k) {
    min_sens = std::min(min_sens, params.beta[k] + params.gamma[k]);
  }
  const double top = guardrails.max_ceiling();
  const auto [m1_lo, m1_hi] = grid.m1_range.value_or(std::pair{0.0, top});
  const auto [m2_lo, m2_hi] = grid.m2_range.value_or(std::pair{-1.0 / min_sens, top});
  if (!(m1_lo <= m1_hi) || !(m2_lo <= m2_hi)) throw std::invalid_argument("empty pricing grid");

  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(grid.m1_points) * static_cast<std::size_t>(grid.m2_points));
  const auto m1s = axis(m1_lo, m1_hi, grid.m1_points);
  const auto m2s = axis(m2_lo, m2_hi, grid.m2_points);
  for (double a : m1s) {
    for (double b : m2s) cells.push_back({a, b, 0.0});
  }
  evaluate_cells(cells, objective, base, guardrails, grid.parallel);
  Cell best = cells.front();
  for (const Cell& c : cells) {
    if (better(c, best)) best = c;
  }
  int evaluations = static_cast<int>(cells.size());

  if (grid.refine && grid.refine_factor > 1 && (grid.m1_points > 1 || grid.m2_points > 1)) {
    const int f = grid.refine_factor;
    const int h = grid.refine_halfwidth * f;
    const double s1 = grid.m1_points > 1 ? (m1_hi - m1_lo) / (grid.m1_points - 1) / f : 0.0;
    const double s2 = grid.m2_points > 1 ? (m2_hi - m2_lo) / (grid.m2_points - 1) / f : 0.0;
    std::vector<double> r1, r2;
    for (int k = -h; k <= h; ++k) {
      const double a = best.m1 + k * s1;
      if (a >= m1_lo && a <= m1_hi && (k == 0 || s1 > 0.0)) r1.push_back(a);
      const double b = best.m2 + k * s2;
      if (b >= m2_lo && b <= m2_hi && (k == 0 || s2 > 0.0)) r2.push_back(b);
    }
    cells.clear();
    for (double a : r1) {
      for (double b : r2) cells.push_back({a, b, 0.0});
    }
    evaluate_cells(cells, objective, base, guardrails, grid.parallel);
    for (const Cell& c : cells) {
      if (better(c, best)) best = c;
    }
    evaluations += static_cast<int>(cells.size());
  }

  PricingResult out;
  out.policy = {best.m1, best.m2};
  out.prices.resize(base.size());
  apply_policy(best.m1, best.m2, base, guardrails, out.prices);
  out.objective = best.value;
  out.evaluations = evaluations;
  return out;
}

}  // namespace schedprice
