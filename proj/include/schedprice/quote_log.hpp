#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "schedprice/calendar.hpp"
#include "schedprice/features.hpp"
#include "schedprice/mst.hpp"

namespace schedprice {

inline constexpr int kLogSchemaVersion = 1;

/// Money crosses every external interface as integer minor units (cents).
inline double to_major(std::int64_t minor) { return static_cast<double>(minor) / 100.0; }
std::int64_t to_minor(double major);

/// Strict "YYYY-MM-DDTHH:MM:SSZ". Throws std::invalid_argument otherwise.
std::int64_t parse_utc(std::string_view text);
std::string format_utc(std::int64_t unix_seconds);
/// Day of week of a unix timestamp (UTC).
DayOfWeek utc_day_of_week(std::int64_t unix_seconds);

struct OptionRecord {
  int index = 1;  // lead time, 1-based
  DayOfWeek day = DayOfWeek::Mon;
  bool available = true;
  std::int64_t price = 0;
  std::int64_t cost = 0;

  friend bool operator==(const OptionRecord&, const OptionRecord&) = default;
};

struct WindowRecord {
  int lead_time = 1;
  int index = 1;  // window, 1-based by start hour
  std::int64_t price = 0;
  std::int64_t cost = 0;

  friend bool operator==(const WindowRecord&, const WindowRecord&) = default;
};

struct SecondLevelRecord {
  /// 0 when the click was not observed (quote did not convert).
  int clicked_lead_time = 0;
  std::vector<WindowRecord> windows;
  int chosen_window = 0;

  friend bool operator==(const SecondLevelRecord&, const SecondLevelRecord&) = default;
};

/// One quote and its outcome; one line of the quote log.
struct ChoiceRecord {
  std::string quote_id;
  std::int64_t timestamp = 0;
  RawFeatures features;
  std::vector<OptionRecord> options;
  int chosen = 0;
  bool canceled = false;
  std::optional<SecondLevelRecord> second_level;

  LeadTimeCalendar calendar() const;
  std::vector<double> prices() const;
  std::vector<double> costs() const;
  /// Window prices for one lead time ordered by window index; empty if
  /// none were logged.
  std::vector<double> window_prices(int lead_time) const;

  friend bool operator==(const ChoiceRecord&, const ChoiceRecord&) = default;
};

/// Throws std::invalid_argument describing the first violated invariant.
void validate(const ChoiceRecord& record);

/// One JSON object, no trailing newline.
std::string to_json_line(const ChoiceRecord& record);
/// Parses and validates one line. Throws std::invalid_argument.
ChoiceRecord parse_json_line(std::string_view line);

class LogSchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IngestConfig {
  /// Abort when more than this fraction of lines is malformed.
  double max_malformed_fraction = 0.01;
};

struct RejectedLine {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  std::vector<ChoiceRecord> records;
  std::vector<RejectedLine> rejected;
};

/// Reads a newline-delimited log. Throws std::runtime_error for a missing or
/// empty file or too many malformed lines, and LogSchemaError on a
/// schema_version other than kLogSchemaVersion.
IngestResult ingest(const std::string& path, const IngestConfig& config = {});
IngestResult ingest_text(std::string_view text, const IngestConfig& config = {});

void write_log(const std::string& path, std::span<const ChoiceRecord> records);

/// First-level training rows with reference prices recomputed from the
/// logged prices. The schema is inferred from the records when not given.
TrainingSet to_training_set(std::span<const ChoiceRecord> records,
                            std::optional<FeatureSchema> schema = std::nullopt);

}  // namespace schedprice
