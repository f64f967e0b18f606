#pragma once

#include <cmath>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace schedprice {

/// A feature value as it appears in logs and requests.
using RawValue = std::variant<double, std::string>;
using RawFeatures = std::map<std::string, RawValue>;

enum class FeatureKind { Numeric, Categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  /// Declared symbols for categorical features, in code order.
  std::vector<std::string> vocabulary;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Encoded features aligned with a FeatureSchema. Numeric features hold the
/// value; categorical features hold the symbol's code. NaN marks a missing
/// value and kUnknownSymbol a categorical symbol outside the vocabulary.
struct FeatureVector {
  std::vector<double> values;

  static constexpr double kUnknownSymbol = -1.0;
  static bool is_missing(double v) { return std::isnan(v); }
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> specs);

  /// Infers kinds from value types and collects sorted vocabularies. Throws
  /// std::invalid_argument if a feature mixes numbers and symbols.
  static FeatureSchema infer(const std::vector<RawFeatures>& rows);

  std::size_t size() const { return specs_.size(); }
  const FeatureSpec& operator[](std::size_t k) const { return specs_[k]; }
  const std::vector<FeatureSpec>& specs() const { return specs_; }
  /// -1 if absent.
  int index_of(const std::string& name) const;

  /// Absent features encode as missing. A value of the wrong type throws
  /// std::invalid_argument; an undeclared symbol encodes as kUnknownSymbol.
  FeatureVector encode(const RawFeatures& raw) const;

  /// Numeric features only (missing -> 0), in schema order.
  std::vector<double> numeric_values(const FeatureVector& x) const;
  std::size_t num_numeric() const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  std::vector<FeatureSpec> specs_;
};

/// Canonical text of a raw value ("west", "12.5"); used for table keys.
std::string to_key_string(const RawValue& v);

}  // namespace schedprice
