#include "schedprice/features.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace schedprice {

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> specs) : specs_(std::move(specs)) {
  std::set<std::string> names;
  for (const auto& s : specs_) {
    if (!names.insert(s.name).second) {
      throw std::invalid_argument("duplicate feature '" + s.name + "'");
    }
  }
}

FeatureSchema FeatureSchema::infer(const std::vector<RawFeatures>& rows) {
  std::map<std::string, FeatureKind> kinds;
  std::map<std::string, std::set<std::string>> vocab;
  for (const auto& row : rows) {
    for (const auto& [name, value] : row) {
      const FeatureKind kind = std::holds_alternative<double>(value) ? FeatureKind::Numeric
                                                                     : FeatureKind::Categorical;
      auto [it, inserted] = kinds.emplace(name, kind);
      if (!inserted && it->second != kind) {
        throw std::invalid_argument("feature '" + name + "' mixes numbers and symbols");
      }
      if (kind == FeatureKind::Categorical) vocab[name].insert(std::get<std::string>(value));
    }
  }
  std::vector<FeatureSpec> specs;
  for (const auto& [name, kind] : kinds) {
    FeatureSpec s{name, kind, {}};
    if (kind == FeatureKind::Categorical) {
      s.vocabulary.assign(vocab[name].begin(), vocab[name].end());
    }
    specs.push_back(std::move(s));
  }
  return FeatureSchema(std::move(specs));
}

int FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    if (specs_[k].name == name) return static_cast<int>(k);
  }
  return -1;
}

FeatureVector FeatureSchema::encode(const RawFeatures& raw) const {
  FeatureVector x;
  x.values.assign(specs_.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    const FeatureSpec& s = specs_[k];
    auto it = raw.find(s.name);
    if (it == raw.end()) continue;
    if (s.kind == FeatureKind::Numeric) {
      if (!std::holds_alternative<double>(it->second)) {
        throw std::invalid_argument("feature '" + s.name + "' expects a number");
      }
      x.values[k] = std::get<double>(it->second);
    } else {
      if (!std::holds_alternative<std::string>(it->second)) {
        throw std::invalid_argument("feature '" + s.name + "' expects a symbol");
      }
      const auto& sym = std::get<std::string>(it->second);
      auto pos = std::find(s.vocabulary.begin(), s.vocabulary.end(), sym);
      x.values[k] = pos == s.vocabulary.end()
                        ? FeatureVector::kUnknownSymbol
                        : static_cast<double>(pos - s.vocabulary.begin());
    }
  }
  return x;
}

std::vector<double> FeatureSchema::numeric_values(const FeatureVector& x) const {
  std::vector<double> out;
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    if (specs_[k].kind != FeatureKind::Numeric) continue;
    const double v = x.values[k];
    out.push_back(FeatureVector::is_missing(v) ? 0.0 : v);
  }
  return out;
}

std::size_t FeatureSchema::num_numeric() const {
  return static_cast<std::size_t>(std::count_if(
      specs_.begin(), specs_.end(), [](const FeatureSpec& s) { return s.kind == FeatureKind::Numeric; }));
}

std::string to_key_string(const RawValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  std::ostringstream os;
  os.precision(17);
  os << std::get<double>(v);
  return os.str();
}

}  // namespace schedprice
