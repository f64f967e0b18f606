#include "schedprice/calendar.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>

namespace schedprice {

namespace {

constexpr std::array<std::string_view, 7> kDayNames = {"Mon", "Tue", "Wed", "Thu",
                                                       "Fri", "Sat", "Sun"};

}  // namespace

std::string_view to_string(DayOfWeek day) { return kDayNames[static_cast<int>(day)]; }

DayOfWeek parse_day_of_week(std::string_view text) {
  for (int d = 0; d < 7; ++d) {
    if (kDayNames[d] == text) return static_cast<DayOfWeek>(d);
  }
  throw std::invalid_argument("unknown day of week '" + std::string(text) + "'");
}

LeadTimeCalendar::LeadTimeCalendar(int num_options, DayOfWeek start_day)
    : start_day_(start_day) {
  if (num_options < 1) throw std::invalid_argument("calendar needs at least one option");
  available_.assign(static_cast<std::size_t>(num_options), true);
}

LeadTimeCalendar::LeadTimeCalendar(DayOfWeek start_day, std::vector<bool> availability)
    : start_day_(start_day), available_(std::move(availability)) {
  if (available_.empty()) throw std::invalid_argument("calendar needs at least one option");
}

void LeadTimeCalendar::check_index(int option) const {
  if (option < 1 || option > num_options()) {
    throw std::out_of_range("lead-time option " + std::to_string(option) +
                            " outside 1.." + std::to_string(num_options()));
  }
}

bool LeadTimeCalendar::available(int option) const {
  check_index(option);
  return available_[static_cast<std::size_t>(option - 1)];
}

DayOfWeek LeadTimeCalendar::day_of(int option) const {
  check_index(option);
  return advance(start_day_, option - 1);
}

int LeadTimeCalendar::num_available() const {
  return static_cast<int>(std::count(available_.begin(), available_.end(), true));
}

void LeadTimeCalendar::set_available(int option, bool value) {
  check_index(option);
  available_[static_cast<std::size_t>(option - 1)] = value;
}

DayClass day_class(const LeadTimeCalendar& calendar, int option) {
  return is_weekend(calendar.day_of(option)) ? DayClass::Weekend : DayClass::Weekday;
}

void reference_prices_into(std::span<const double> prices, const LeadTimeCalendar& calendar,
                           std::span<double> out) {
  const int L = calendar.num_options();
  const auto& avail = calendar.availability();
  const int start = static_cast<int>(calendar.start_day());

  // Weekend minimum, plus the available weekdays in calendar order. L is
  // small (<= a few dozen) so a fixed stack buffer covers the common case.
  double weekend_min = std::numeric_limits<double>::infinity();
  constexpr int kStack = 64;
  int stack_idx[kStack];
  std::vector<int> heap_idx;
  int* weekdays = stack_idx;
  if (L > kStack) {
    heap_idx.resize(static_cast<std::size_t>(L));
    weekdays = heap_idx.data();
  }
  int n_weekdays = 0;
  for (int k = 0; k < L; ++k) {
    out[k] = prices[k];
    if (!avail[k]) continue;
    if ((start + k) % 7 >= 5) {
      weekend_min = std::min(weekend_min, prices[k]);
    } else {
      weekdays[n_weekdays++] = k;
    }
  }
  for (int k = 0; k < L; ++k) {
    if (avail[k] && (start + k) % 7 >= 5) out[k] = weekend_min;
  }
  for (int w = 0; w < n_weekdays; ++w) {
    double r = prices[weekdays[w]];
    if (w > 0) r = std::min(r, prices[weekdays[w - 1]]);
    if (w + 1 < n_weekdays) r = std::min(r, prices[weekdays[w + 1]]);
    out[weekdays[w]] = r;
  }
}

std::vector<double> reference_prices(std::span<const double> prices,
                                     const LeadTimeCalendar& calendar) {
  if (static_cast<int>(prices.size()) != calendar.num_options()) {
    throw std::invalid_argument("price vector length does not match calendar");
  }
  for (double p : prices) {
    if (!(p >= 0.0)) throw std::invalid_argument("prices must be nonnegative and finite");
  }
  std::vector<double> r(prices.size());
  reference_prices_into(prices, calendar, r);
  return r;
}

}  // namespace schedprice
