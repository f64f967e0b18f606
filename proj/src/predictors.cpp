#include "schedprice/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "schedprice/mst.hpp"

namespace schedprice {

// ---------------------------------------------------------------------------
// CostTable

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::string canonical_key(const std::string& cell) {
  if (cell == "*") return cell;
  if (auto v = parse_number(cell)) return to_key_string(*v);
  return cell;
}

}  // namespace

CostTable::CostTable(std::vector<std::string> key_features, std::vector<double> fallback_curve)
    : key_features_(std::move(key_features)), fallback_(std::move(fallback_curve)) {}

CostTable CostTable::constant(int num_options, double cost) {
  return CostTable({}, std::vector<double>(static_cast<std::size_t>(num_options), cost));
}

void CostTable::add_curve(std::vector<std::string> key_values, std::vector<double> curve) {
  if (key_values.size() != key_features_.size()) {
    throw std::invalid_argument("cost curve key has wrong arity");
  }
  for (double c : curve) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("costs must be finite and >= 0");
  }
  for (auto& k : key_values) k = canonical_key(k);
  curves_[std::move(key_values)] = std::move(curve);
}

CostTable CostTable::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv_line(line);
    break;
  }
  std::size_t n_keys = 0;
  while (n_keys < header.size() && header[n_keys].rfind("cost_", 0) != 0) ++n_keys;
  const std::size_t n_costs = header.size() - n_keys;
  if (n_costs == 0) throw std::invalid_argument("cost table header has no cost_ columns");
  for (std::size_t k = 0; k < n_costs; ++k) {
    if (header[n_keys + k] != "cost_" + std::to_string(k + 1)) {
      throw std::invalid_argument("cost columns must be cost_1..cost_K in order");
    }
  }
  CostTable table(std::vector<std::string>(header.begin(), header.begin() + n_keys), {});
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("cost table line " + std::to_string(line_no) +
                                  ": wrong number of cells");
    }
    std::vector<double> curve;
    for (std::size_t k = 0; k < n_costs; ++k) {
      auto v = parse_number(cells[n_keys + k]);
      if (!v) {
        throw std::invalid_argument("cost table line " + std::to_string(line_no) +
                                    ": bad cost '" + cells[n_keys + k] + "'");
      }
      curve.push_back(*v / 100.0);
    }
    std::vector<std::string> key(cells.begin(), cells.begin() + n_keys);
    if (std::all_of(key.begin(), key.end(), [](const std::string& s) { return s == "*"; })) {
      table.fallback_ = std::move(curve);
    } else {
      table.add_curve(std::move(key), std::move(curve));
    }
  }
  return table;
}

std::string CostTable::to_csv() const {
  std::size_t width = fallback_.size();
  for (const auto& [k, c] : curves_) width = std::max(width, c.size());
  std::ostringstream os;
  os.precision(17);
  for (const auto& k : key_features_) os << k << ',';
  for (std::size_t i = 0; i < width; ++i) os << (i ? "," : "") << "cost_" << i + 1;
  os << '\n';
  auto row = [&](const std::vector<std::string>& key, const std::vector<double>& curve) {
    for (const auto& k : key) os << k << ',';
    for (std::size_t i = 0; i < curve.size(); ++i) {
      // Whole minor units are written as integers so they parse back to the
      // identical double.
      const double minor = curve[i] * 100.0;
      os << (i ? "," : "");
      if (std::abs(minor - std::round(minor)) < 1e-7 && std::abs(minor) < 1e15) {
        os << static_cast<long long>(std::llround(minor));
      } else {
        os << minor;
      }
    }
    os << '\n';
  };
  for (const auto& [k, c] : curves_) row(k, c);
  if (!fallback_.empty()) row(std::vector<std::string>(key_features_.size(), "*"), fallback_);
  return os.str();
}

std::vector<std::string> CostTable::key_of(const RawFeatures& x) const {
  std::vector<std::string> key;
  key.reserve(key_features_.size());
  for (const auto& name : key_features_) {
    auto it = x.find(name);
    key.push_back(it == x.end() ? std::string{} : to_key_string(it->second));
  }
  return key;
}

std::vector<double> CostTable::expected_costs(const RawFeatures& x,
                                              const LeadTimeCalendar& calendar) const {
  const std::vector<double>* curve = &fallback_;
  if (!curves_.empty()) {
    auto it = curves_.find(key_of(x));
    if (it != curves_.end()) {
      curve = &it->second;
    } else {
      unknown_keys_->fetch_add(1);
    }
  }
  const auto L = static_cast<std::size_t>(calendar.num_options());
  if (curve->size() < L) {
    throw std::invalid_argument("cost curve has " + std::to_string(curve->size()) +
                                " options; calendar needs " + std::to_string(L));
  }
  return {curve->begin(), curve->begin() + static_cast<std::ptrdiff_t>(L)};
}

// ---------------------------------------------------------------------------
// Cancellation

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::size_t option_width(OptionEncoding enc, int num_options) {
  switch (enc) {
    case OptionEncoding::None: return 0;
    case OptionEncoding::Linear: return 1;
    case OptionEncoding::OneHot: return static_cast<std::size_t>(std::max(0, num_options - 1));
  }
  return 0;
}

// Design row: [1, option block, numeric block].
void design_row(const LogisticCoefficients& layout, std::span<const double> numeric_x, int option,
                std::size_t opt_w, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  out[0] = 1.0;
  if (layout.encoding == OptionEncoding::Linear) {
    out[1] = static_cast<double>(option);
  } else if (layout.encoding == OptionEncoding::OneHot && option >= 2 &&
             static_cast<std::size_t>(option - 1) <= opt_w) {
    out[1 + static_cast<std::size_t>(option - 2)] = 1.0;
  }
  for (std::size_t k = 0; k < layout.numeric_effect.size(); ++k) out[1 + opt_w + k] = numeric_x[k];
}

}  // namespace

double LogisticCoefficients::probability(std::span<const double> numeric_x, int option) const {
  if (constant_rate) return *constant_rate;
  double z = intercept;
  switch (encoding) {
    case OptionEncoding::None: break;
    case OptionEncoding::Linear:
      z += option_effect.empty() ? 0.0 : option_effect[0] * option;
      break;
    case OptionEncoding::OneHot:
      if (option >= 1 && static_cast<std::size_t>(option) <= option_effect.size()) {
        z += option_effect[static_cast<std::size_t>(option - 1)];
      }
      break;
  }
  for (std::size_t k = 0; k < numeric_effect.size() && k < numeric_x.size(); ++k) {
    z += numeric_effect[k] * numeric_x[k];
  }
  return sigmoid(z);
}

CancelFit fit_cancellation(std::span<const CancellationRow> rows, const FeatureSchema& schema,
                           int num_options, const CancelFitConfig& config) {
  if (rows.empty()) throw std::invalid_argument("fit_cancellation: empty data");
  std::size_t n_cancel = 0;
  for (const auto& r : rows) n_cancel += r.canceled ? 1 : 0;
  CancelFit out;
  if (n_cancel == 0 || n_cancel == rows.size()) {
    const double rate = static_cast<double>(n_cancel) / static_cast<double>(rows.size());
    out.coefficients.constant_rate = std::clamp(rate, 1e-4, 1.0 - 1e-4);
    out.std_errors.constant_rate = 0.0;
    out.converged = true;
    return out;
  }

  LogisticCoefficients layout;
  layout.encoding = config.encoding;
  const std::size_t opt_w = option_width(config.encoding, num_options);
  const std::size_t num_w = config.use_numeric_features ? schema.num_numeric() : 0;
  layout.numeric_effect.assign(num_w, 0.0);
  const std::size_t P = 1 + opt_w + num_w;
  const auto N = static_cast<Eigen::Index>(rows.size());

  Eigen::MatrixXd X(N, static_cast<Eigen::Index>(P));
  Eigen::VectorXd y(N);
  std::vector<double> buf(P);
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto& r = rows[static_cast<std::size_t>(n)];
    const std::vector<double> numeric = schema.numeric_values(r.x);
    design_row(layout, numeric, r.option, opt_w, buf);
    for (std::size_t j = 0; j < P; ++j) X(n, static_cast<Eigen::Index>(j)) = buf[j];
    y[n] = r.canceled ? 1.0 : 0.0;
  }

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(P), config.l2);
  penalty[0] = 0.0;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
  const double rate = static_cast<double>(n_cancel) / static_cast<double>(rows.size());
  theta[0] = std::log(rate / (1.0 - rate));

  auto objective = [&](const Eigen::VectorXd& t) {
    const Eigen::VectorXd z = X * t;
    double f = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) {
      // log(1 + e^z) - y z, stably.
      const double zn = z[n];
      f += (zn > 0 ? zn + std::log1p(std::exp(-zn)) : std::log1p(std::exp(zn))) - y[n] * zn;
    }
    return f + 0.5 * (penalty.array() * t.array().square()).sum();
  };

  Eigen::MatrixXd H;
  double f = objective(theta);
  for (int it = 0; it < config.max_iter; ++it) {
    const Eigen::VectorXd z = X * theta;
    Eigen::VectorXd p(N), w(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      p[n] = sigmoid(z[n]);
      w[n] = p[n] * (1.0 - p[n]);
    }
    const Eigen::VectorXd g = X.transpose() * (p - y) + penalty.cwiseProduct(theta);
    H = X.transpose() * w.asDiagonal() * X;
    H.diagonal() += penalty;
    if (g.lpNorm<Eigen::Infinity>() <= config.grad_tol) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd step = H.ldlt().solve(-g);
    double t = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd cand = theta + t * step;
      const double fc = objective(cand);
      if (fc <= f + 1e-4 * t * g.dot(step) || std::abs(g.dot(step)) < 1e-12 * std::max(1.0, f)) {
        theta = cand;
        f = fc;
        break;
      }
      t *= 0.5;
    }
  }

  Eigen::VectorXd se = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(P),
                                                 std::numeric_limits<double>::quiet_NaN());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
    for (Eigen::Index k = 0; k < inv.rows(); ++k) se[k] = std::sqrt(std::max(0.0, inv(k, k)));
  }

  auto unpack = [&](const Eigen::VectorXd& v) {
    LogisticCoefficients c;
    c.encoding = config.encoding;
    c.intercept = v[0];
    if (config.encoding == OptionEncoding::Linear) {
      c.option_effect = {v[1]};
    } else if (config.encoding == OptionEncoding::OneHot) {
      c.option_effect.assign(static_cast<std::size_t>(num_options), 0.0);
      for (std::size_t k = 0; k < opt_w; ++k) {
        c.option_effect[k + 1] = v[static_cast<Eigen::Index>(1 + k)];
      }
    }
    for (std::size_t k = 0; k < num_w; ++k) {
      c.numeric_effect.push_back(v[static_cast<Eigen::Index>(1 + opt_w + k)]);
    }
    return c;
  };
  out.coefficients = unpack(theta);
  out.std_errors = unpack(se);
  return out;
}

CancellationModel::CancellationModel(FeatureSchema schema, LogisticCoefficients global,
                                     std::map<int, LogisticCoefficients> by_segment)
    : schema_(std::move(schema)), global_(std::move(global)), by_segment_(std::move(by_segment)) {}

CancellationModel CancellationModel::constant(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("rate must be in [0, 1]");
  LogisticCoefficients c;
  c.constant_rate = rate;
  return CancellationModel({}, c);
}

double CancellationModel::cancel_probability(const FeatureVector& x, int option,
                                             int segment_id) const {
  const LogisticCoefficients* c = &global_;
  if (auto it = by_segment_.find(segment_id); it != by_segment_.end()) c = &it->second;
  if (c->constant_rate) return *c->constant_rate;
  if (x.values.size() != schema_.size()) {
    throw std::invalid_argument("feature vector does not match cancellation schema");
  }
  return c->probability(schema_.numeric_values(x), option);
}

double CancellationModel::execute_probability(const FeatureVector& x, int option,
                                              int segment_id) const {
  return 1.0 - cancel_probability(x, option, segment_id);
}

std::vector<double> CancellationModel::cancel_probabilities(const FeatureVector& x,
                                                            int num_options,
                                                            int segment_id) const {
  std::vector<double> q(static_cast<std::size_t>(num_options));
  for (int i = 1; i <= num_options; ++i) q[i - 1] = cancel_probability(x, i, segment_id);
  return q;
}

CancellationModel fit_cancellation_model(const SegmentationTree& tree,
                                         std::span<const CancellationRow> rows, int num_options,
                                         std::size_t min_segment_rows,
                                         const CancelFitConfig& config) {
  const FeatureSchema& schema = tree.schema();
  LogisticCoefficients global = fit_cancellation(rows, schema, num_options, config).coefficients;
  std::map<int, std::vector<CancellationRow>> groups;
  for (const auto& r : rows) groups[tree.route(r.x).segment_id].push_back(r);
  std::map<int, LogisticCoefficients> by_segment;
  if (tree.num_leaves() > 1) {
    for (const auto& [seg, seg_rows] : groups) {
      if (seg_rows.size() < min_segment_rows) continue;
      by_segment[seg] = fit_cancellation(seg_rows, schema, num_options, config).coefficients;
    }
  }
  return CancellationModel(schema, std::move(global), std::move(by_segment));
}

}  // namespace schedprice
