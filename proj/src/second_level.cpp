#include "schedprice/second_level.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "schedprice/logit_fit.hpp"
#include "schedprice/rng.hpp"

namespace schedprice {

namespace {
constexpr std::uint64_t kImputeStream = 0x1a9e7c11c5;
}

WindowCatalog::WindowCatalog(std::vector<TimeWindow> windows) : windows_(std::move(windows)) {
  if (windows_.empty()) throw std::invalid_argument("window catalog needs at least one window");
  std::sort(windows_.begin(), windows_.end(),
            [](const TimeWindow& a, const TimeWindow& b) { return a.start_hour < b.start_hour; });
  int end = 0;
  for (const auto& w : windows_) {
    if (w.start_hour < end || w.length_hours < 1 || w.start_hour + w.length_hours > 24) {
      throw std::invalid_argument("windows must be non-empty, non-overlapping and within a day");
    }
    end = w.start_hour + w.length_hours;
  }
}

WindowCatalog WindowCatalog::uniform(int length_hours) {
  if (length_hours != 2 && length_hours != 3 && length_hours != 4 && length_hours != 6) {
    throw std::invalid_argument("uniform windows are 2, 3, 4 or 6 hours long");
  }
  std::vector<TimeWindow> w;
  for (int h = 0; h < 24; h += length_hours) w.push_back({h, length_hours});
  return WindowCatalog(std::move(w));
}

std::vector<double> window_features(std::span<const double> numeric_x, int lead_time) {
  std::vector<double> x(numeric_x.begin(), numeric_x.end());
  x.push_back(static_cast<double>(lead_time));
  return x;
}

std::vector<double> window_probabilities(const WindowMnlParams& params, std::span<const double> x,
                                         std::span<const double> prices) {
  const std::size_t M = params.alpha.size();
  if (prices.size() != M) throw std::invalid_argument("need one price per window");
  if (x.size() != params.gamma.size()) throw std::invalid_argument("feature length mismatch");
  double gx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) gx += params.gamma[k] * x[k];
  std::vector<double> out(M + 1);
  out[0] = 0.0;
  double vmax = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    if (!(prices[j] >= 0.0)) throw std::invalid_argument("window prices must be >= 0");
    const double v = params.alpha[j] - params.beta * prices[j] + gx +
                     params.delta * static_cast<double>(j + 1);
    if (!std::isfinite(v)) throw std::domain_error("non-finite window utility");
    out[j + 1] = v;
    vmax = std::max(vmax, v);
  }
  double z = 0.0;
  for (double& v : out) {
    v = std::exp(v - vmax);
    z += v;
  }
  for (double& v : out) v /= z;
  return out;
}

ImputeResult impute_clicks(std::span<const UnconvertedQuote> quotes, std::uint64_t seed) {
  ImputeResult out;
  for (std::size_t q = 0; q < quotes.size(); ++q) {
    const UnconvertedQuote& u = quotes[q];
    const std::span<const double> purchase(u.first_level_probs.data() + 1,
                                           u.first_level_probs.size() - 1);
    double mass = 0.0;
    for (double p : purchase) mass += p;
    if (u.first_level_probs.empty() || !(mass > 0.0) || u.first_level_probs[0] >= 1.0) {
      ++out.dropped_no_purchase_mass;
      continue;
    }
    Rng rng(derive_seed(seed, kImputeStream, q));
    const int i = static_cast<int>(rng.categorical(purchase)) + 1;
    if (static_cast<std::size_t>(i) > u.window_prices.size() || u.window_prices[i - 1].empty()) {
      ++out.dropped_missing_windows;
      continue;
    }
    out.rows.push_back({window_features(u.numeric_x, i), u.window_prices[i - 1], 0, true});
    out.source.push_back(q);
  }
  return out;
}

double window_nll(const WindowMnlParams& params, std::span<const SecondLevelObservation> rows) {
  double nll = 0.0;
  for (const auto& r : rows) {
    nll -= std::log(window_probabilities(params, r.x, r.prices)[r.chosen_window]);
  }
  return nll;
}

WindowFit fit_window_model(std::span<const SecondLevelObservation> rows, int num_windows,
                           const WindowFitConfig& config) {
  if (rows.empty()) throw UnidentifiableFitError("no window observations", {});
  const auto M = static_cast<std::size_t>(num_windows);
  const std::size_t D = rows.front().x.size();
  std::size_t purchases = 0;
  std::set<double> prices;
  std::vector<double> x_min(D, std::numeric_limits<double>::infinity());
  std::vector<double> x_max(D, -std::numeric_limits<double>::infinity());
  for (const auto& r : rows) {
    if (r.prices.size() != M || r.x.size() != D) {
      throw std::invalid_argument("window observation has the wrong shape");
    }
    if (r.chosen_window < 0 || r.chosen_window > num_windows) {
      throw std::invalid_argument("chosen window out of range");
    }
    purchases += r.chosen_window > 0 ? 1 : 0;
    for (double p : r.prices) {
      if (prices.size() < 2) prices.insert(p);
    }
    for (std::size_t k = 0; k < D; ++k) {
      x_min[k] = std::min(x_min[k], r.x[k]);
      x_max[k] = std::max(x_max[k], r.x[k]);
    }
  }
  if (purchases == 0) throw UnidentifiableFitError("no window purchases", {});
  if (prices.size() < 2) throw UnidentifiableFitError("no window price variation", {});

  // Layout: c_1..c_M, beta, gamma_1..gamma_D.
  const std::size_t P = M + 1 + D;
  LogitDesign design(P);
  design.reserve(rows.size(), M);
  std::vector<double> buf(M * P);
  for (const auto& r : rows) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t j = 0; j < M; ++j) {
      double* row = buf.data() + j * P;
      row[j] = 1.0;
      row[M] = -r.prices[j];
      std::copy(r.x.begin(), r.x.end(), row + M + 1);
    }
    design.add_situation(buf, r.chosen_window - 1);
  }

  const double inf = std::numeric_limits<double>::infinity();
  const auto Pi = static_cast<Eigen::Index>(P);
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(Pi, -inf);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(Pi, inf);
  lower[static_cast<Eigen::Index>(M)] = config.beta_lower;
  // A constant feature is collinear with the window constants; pin it.
  for (std::size_t k = 0; k < D; ++k) {
    if (x_min[k] == x_max[k]) {
      lower[static_cast<Eigen::Index>(M + 1 + k)] = 0.0;
      upper[static_cast<Eigen::Index>(M + 1 + k)] = 0.0;
    }
  }
  Eigen::VectorXd start = Eigen::VectorXd::Zero(Pi);
  start[static_cast<Eigen::Index>(M)] = config.beta_lower;

  BoxFitConfig box;
  box.grad_tol = config.grad_tol;
  box.max_iter = config.max_iter;
  box.parallel = config.parallel;
  const auto all = all_rows(design);
  const BoxFitResult r = fit_logit_box(design, all, lower, upper, start, box);

  WindowFit fit;
  const double jbar = (static_cast<double>(M) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    const double dj = static_cast<double>(j + 1) - jbar;
    sxy += dj * r.theta[static_cast<Eigen::Index>(j)];
    sxx += dj * dj;
  }
  fit.params.delta = sxx > 0.0 ? sxy / sxx : 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    fit.params.alpha.push_back(r.theta[static_cast<Eigen::Index>(j)] -
                               fit.params.delta * static_cast<double>(j + 1));
  }
  fit.params.beta = r.theta[static_cast<Eigen::Index>(M)];
  for (std::size_t k = 0; k < D; ++k) {
    fit.params.gamma.push_back(r.theta[static_cast<Eigen::Index>(M + 1 + k)]);
  }
  fit.nll = r.nll;
  fit.projected_grad_norm = r.projected_grad_norm;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  return fit;
}

double window_objective(const WindowMnlParams& params, std::span<const double> x,
                        std::span<const double> prices, std::span<const double> costs) {
  if (costs.size() != prices.size()) throw std::invalid_argument("need one cost per window");
  const std::vector<double> pr = window_probabilities(params, x, prices);
  double total = 0.0;
  for (std::size_t j = 0; j < prices.size(); ++j) total += (prices[j] - costs[j]) * pr[j + 1];
  return total;
}

WindowPricing price_windows(double first_level_price, std::span<const double> window_costs,
                            const WindowMnlParams& params, std::span<const double> x,
                            double ceiling, const WindowGridConfig& grid) {
  const std::size_t M = window_costs.size();
  if (M == 0) throw std::invalid_argument("empty window set");
  if (M != params.alpha.size()) throw std::invalid_argument("window costs do not match params");
  if (grid.points < 1) throw std::invalid_argument("empty markup grid");
  const std::size_t pinned = static_cast<std::size_t>(
      std::min_element(window_costs.begin(), window_costs.end()) - window_costs.begin());
  const double min_cost = window_costs[pinned];

  std::vector<double> prices(M);
  auto fill = [&](double m3) {
    for (std::size_t j = 0; j < M; ++j) {
      prices[j] = j == pinned ? first_level_price
                              : std::max(first_level_price, std::min(window_costs[j] + m3, ceiling));
    }
  };
  double best_m3 = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  auto consider = [&](double m3) {
    fill(m3);
    const double v = window_objective(params, x, prices, window_costs);
    if (v > best || (v == best && m3 < best_m3)) {
      best = v;
      best_m3 = m3;
    }
  };

  const double hi = std::max(0.0, ceiling - min_cost);
  const double step = grid.points > 1 ? hi / (grid.points - 1) : 0.0;
  for (int k = 0; k < grid.points; ++k) consider(grid.points > 1 ? hi * k / (grid.points - 1) : 0.0);
  if (grid.refine && step > 0.0 && grid.refine_points > 1) {
    const double center = best_m3;
    for (int k = 0; k < grid.refine_points; ++k) {
      const double m3 = center - step + 2.0 * step * k / (grid.refine_points - 1);
      if (m3 >= 0.0 && m3 <= hi) consider(m3);
    }
  }
  fill(best_m3);
  return {prices, best_m3, best};
}

std::vector<double> purchase_weights(std::span<const double> first_level_probs) {
  if (first_level_probs.empty()) throw std::invalid_argument("empty first-level distribution");
  const double p0 = first_level_probs[0];
  if (!(p0 < 1.0)) throw std::domain_error("no purchase mass: P(Y1=0) = 1");
  double mass = 0.0;
  for (std::size_t i = 1; i < first_level_probs.size(); ++i) mass += first_level_probs[i];
  std::vector<double> w(first_level_probs.size() - 1);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = first_level_probs[i + 1] / mass;
  return w;
}

double combined_objective(std::span<const double> first_level_probs,
                          std::span<const double> numeric_x, const WindowMnlParams& params,
                          std::span<const std::vector<double>> prices,
                          std::span<const std::vector<double>> costs) {
  const std::vector<double> w = purchase_weights(first_level_probs);
  if (prices.size() != w.size() || costs.size() != w.size()) {
    throw std::invalid_argument("need window prices and costs for every lead time");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto x = window_features(numeric_x, static_cast<int>(i + 1));
    total += w[i] * window_objective(params, x, prices[i], costs[i]);
  }
  return total;
}

}  // namespace schedprice
