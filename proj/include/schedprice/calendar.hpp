#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace schedprice {

enum class DayOfWeek : std::uint8_t { Mon = 0, Tue, Wed, Thu, Fri, Sat, Sun };
enum class DayClass : std::uint8_t { Weekday, Weekend };

/// Three-letter English abbreviation ("Mon" .. "Sun").
std::string_view to_string(DayOfWeek day);
/// Inverse of to_string; throws std::invalid_argument on anything else.
DayOfWeek parse_day_of_week(std::string_view text);

constexpr DayOfWeek advance(DayOfWeek day, int days) {
  int v = (static_cast<int>(day) + days) % 7;
  if (v < 0) v += 7;
  return static_cast<DayOfWeek>(v);
}

constexpr bool is_weekend(DayOfWeek day) {
  return day == DayOfWeek::Sat || day == DayOfWeek::Sun;
}

/// The lead-time options offered on one quote. Option i (1-based) falls
/// on start_day advanced by i-1 days.
class LeadTimeCalendar {
 public:
  LeadTimeCalendar() = default;
  /// All options available.
  LeadTimeCalendar(int num_options, DayOfWeek start_day);
  LeadTimeCalendar(DayOfWeek start_day, std::vector<bool> availability);

  int num_options() const { return static_cast<int>(available_.size()); }
  DayOfWeek start_day() const { return start_day_; }
  const std::vector<bool>& availability() const { return available_; }

  /// 1-based; throws std::out_of_range.
  bool available(int option) const;
  DayOfWeek day_of(int option) const;
  int num_available() const;

  void set_available(int option, bool value);

  friend bool operator==(const LeadTimeCalendar&, const LeadTimeCalendar&) = default;

 private:
  void check_index(int option) const;

  DayOfWeek start_day_ = DayOfWeek::Mon;
  std::vector<bool> available_;
};

/// Weekend iff option i falls on Saturday or Sunday. Throws std::out_of_range.
DayClass day_class(const LeadTimeCalendar& calendar, int option);

/// Local reference prices.
///
/// A weekday option's reference is the minimum price over itself and its
/// neighbours in the sequence of available weekday options (a Friday and
/// the following Monday are adjacent). A weekend option's reference is the
/// minimum over all available weekend options. Unavailable options get
/// r = p so they never carry a reference gap.
///
/// Throws std::invalid_argument on a length mismatch or a negative price.
std::vector<double> reference_prices(std::span<const double> prices,
                                     const LeadTimeCalendar& calendar);

/// Allocation-free variant used in the pricing inner loop. `out` must have
/// the same length as `prices`; no validation is performed.
void reference_prices_into(std::span<const double> prices,
                           const LeadTimeCalendar& calendar,
                           std::span<double> out);

}  // namespace schedprice
