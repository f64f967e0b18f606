#include "schedprice/quote_log.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace schedprice {

using nlohmann::json;

std::int64_t to_minor(double major) { return std::llround(major * 100.0); }

std::int64_t parse_utc(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SSZ
  static constexpr std::string_view shape = "dddd-dd-ddTdd:dd:ddZ";
  if (text.size() != shape.size()) {
    throw std::invalid_argument("timestamp '" + std::string(text) +
                                "' is not YYYY-MM-DDTHH:MM:SSZ");
  }
  for (std::size_t k = 0; k < shape.size(); ++k) {
    const bool ok = shape[k] == 'd' ? (text[k] >= '0' && text[k] <= '9') : text[k] == shape[k];
    if (!ok) {
      throw std::invalid_argument("timestamp '" + std::string(text) +
                                  "' is not YYYY-MM-DDTHH:MM:SSZ");
    }
  }
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t k = pos; k < pos + len; ++k) v = v * 10 + (text[k] - '0');
    return v;
  };
  using namespace std::chrono;
  const year_month_day ymd{year{num(0, 4)}, month{static_cast<unsigned>(num(5, 2))},
                           day{static_cast<unsigned>(num(8, 2))}};
  const int hh = num(11, 2), mm = num(14, 2), ss = num(17, 2);
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) {
    throw std::invalid_argument("timestamp '" + std::string(text) + "' is not a valid instant");
  }
  const auto t = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
  return t.time_since_epoch().count();
}

std::string format_utc(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const sys_seconds t{seconds{unix_seconds}};
  const auto d = floor<days>(t);
  const year_month_day ymd{d};
  const hh_mm_ss hms{t - d};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

DayOfWeek utc_day_of_week(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const auto d = floor<days>(sys_seconds{seconds{unix_seconds}});
  // weekday::iso_encoding: Mon = 1 .. Sun = 7
  return static_cast<DayOfWeek>(weekday{d}.iso_encoding() - 1);
}

LeadTimeCalendar ChoiceRecord::calendar() const {
  std::vector<bool> avail;
  avail.reserve(options.size());
  for (const auto& o : options) avail.push_back(o.available);
  return LeadTimeCalendar(options.empty() ? DayOfWeek::Mon : options.front().day, std::move(avail));
}

std::vector<double> ChoiceRecord::prices() const {
  std::vector<double> p;
  p.reserve(options.size());
  for (const auto& o : options) p.push_back(to_major(o.price));
  return p;
}

std::vector<double> ChoiceRecord::costs() const {
  std::vector<double> c;
  c.reserve(options.size());
  for (const auto& o : options) c.push_back(to_major(o.cost));
  return c;
}

std::vector<double> ChoiceRecord::window_prices(int lead_time) const {
  std::vector<double> p;
  if (!second_level) return p;
  for (const auto& w : second_level->windows) {
    if (w.lead_time != lead_time) continue;
    if (static_cast<std::size_t>(w.index) > p.size()) p.resize(static_cast<std::size_t>(w.index));
    p[static_cast<std::size_t>(w.index - 1)] = to_major(w.price);
  }
  return p;
}

void validate(const ChoiceRecord& r) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (r.quote_id.empty()) fail("empty quote_id");
  if (r.options.empty()) fail("no options");
  const int L = static_cast<int>(r.options.size());
  for (int k = 0; k < L; ++k) {
    const auto& o = r.options[k];
    if (o.index != k + 1) fail("option indices must be 1..L in order");
    if (o.day != advance(r.options.front().day, k)) fail("option days must be consecutive");
    if (o.price < 0 || o.cost < 0) fail("negative price or cost on option " + std::to_string(k + 1));
  }
  if (r.chosen < 0 || r.chosen > L) fail("chosen " + std::to_string(r.chosen) + " out of range");
  if (r.chosen > 0 && !r.options[r.chosen - 1].available) {
    fail("chosen option " + std::to_string(r.chosen) + " was not available");
  }
  if (r.canceled && r.chosen == 0) fail("canceled without a conversion");
  if (!r.second_level) return;
  const auto& s = *r.second_level;
  if (s.clicked_lead_time < 0 || s.clicked_lead_time > L) fail("clicked_lead_time out of range");
  if (r.chosen > 0 && s.clicked_lead_time != r.chosen) {
    fail("converted quote must record the chosen lead time as clicked");
  }
  if ((r.chosen > 0) != (s.chosen_window > 0)) {
    fail("a conversion requires a chosen window and vice versa");
  }
  std::map<int, std::vector<int>> per_lead;
  for (const auto& w : s.windows) {
    if (w.lead_time < 1 || w.lead_time > L) fail("window lead_time out of range");
    if (w.index < 1) fail("window index must be >= 1");
    if (w.price < 0 || w.cost < 0) fail("negative window price or cost");
    per_lead[w.lead_time].push_back(w.index);
  }
  std::size_t M = 0;
  for (auto& [lead, idx] : per_lead) {
    std::sort(idx.begin(), idx.end());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] != static_cast<int>(k + 1)) fail("window indices must be 1..M per lead time");
    }
    if (M != 0 && idx.size() != M) fail("every lead time must log the same windows");
    M = idx.size();
  }
  if (s.chosen_window < 0 || static_cast<std::size_t>(s.chosen_window) > M) {
    fail("chosen_window out of range");
  }
  if (s.chosen_window > 0 && !per_lead.count(r.chosen)) fail("no windows logged for chosen lead time");
}

std::string to_json_line(const ChoiceRecord& r) {
  json j;
  j["schema_version"] = kLogSchemaVersion;
  j["quote_id"] = r.quote_id;
  j["timestamp"] = format_utc(r.timestamp);
  json f = json::object();
  for (const auto& [name, v] : r.features) {
    if (const auto* d = std::get_if<double>(&v)) {
      f[name] = *d;
    } else {
      f[name] = std::get<std::string>(v);
    }
  }
  j["features"] = std::move(f);
  json opts = json::array();
  for (const auto& o : r.options) {
    opts.push_back({{"index", o.index},
                    {"day_of_week", std::string(to_string(o.day))},
                    {"available", o.available},
                    {"price", o.price},
                    {"cost_estimate", o.cost}});
  }
  j["options"] = std::move(opts);
  j["chosen"] = r.chosen;
  j["canceled"] = r.canceled;
  if (r.second_level) {
    json w = json::array();
    for (const auto& x : r.second_level->windows) {
      w.push_back({{"lead_time", x.lead_time}, {"index", x.index}, {"price", x.price}, {"cost", x.cost}});
    }
    j["second_level"] = {{"clicked_lead_time", r.second_level->clicked_lead_time},
                         {"windows", std::move(w)},
                         {"chosen_window", r.second_level->chosen_window}};
  }
  return j.dump();
}

namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
  const json& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw std::invalid_argument(std::string("'") + key + "' must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      throw std::invalid_argument(std::string("'") + key + "' must be an integer");
    }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw std::invalid_argument(std::string("'") + key + "' must be a string");
  }
  return v.get<T>();
}

}  // namespace

ChoiceRecord parse_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  const int version = field<int>(j, "schema_version");
  if (version != kLogSchemaVersion) {
    throw LogSchemaError("log schema_version " + std::to_string(version) + ", expected " +
                         std::to_string(kLogSchemaVersion));
  }
  ChoiceRecord r;
  r.quote_id = field<std::string>(j, "quote_id");
  r.timestamp = parse_utc(field<std::string>(j, "timestamp"));
  if (!j.contains("features") || !j.at("features").is_object()) {
    throw std::invalid_argument("'features' must be an object");
  }
  for (const auto& [name, v] : j.at("features").items()) {
    if (v.is_number()) {
      r.features[name] = v.get<double>();
    } else if (v.is_string()) {
      r.features[name] = v.get<std::string>();
    } else {
      throw std::invalid_argument("feature '" + name + "' must be a number or a string");
    }
  }
  if (!j.contains("options") || !j.at("options").is_array()) {
    throw std::invalid_argument("'options' must be an array");
  }
  for (const auto& o : j.at("options")) {
    OptionRecord opt;
    opt.index = field<int>(o, "index");
    opt.day = parse_day_of_week(field<std::string>(o, "day_of_week"));
    opt.available = field<bool>(o, "available");
    opt.price = field<std::int64_t>(o, "price");
    opt.cost = field<std::int64_t>(o, "cost_estimate");
    r.options.push_back(opt);
  }
  r.chosen = field<int>(j, "chosen");
  r.canceled = field<bool>(j, "canceled");
  if (j.contains("second_level") && !j.at("second_level").is_null()) {
    const json& s = j.at("second_level");
    SecondLevelRecord sl;
    sl.clicked_lead_time = field<int>(s, "clicked_lead_time");
    sl.chosen_window = field<int>(s, "chosen_window");
    if (!s.contains("windows") || !s.at("windows").is_array()) {
      throw std::invalid_argument("'windows' must be an array");
    }
    for (const auto& w : s.at("windows")) {
      sl.windows.push_back({field<int>(w, "lead_time"), field<int>(w, "index"),
                            field<std::int64_t>(w, "price"), field<std::int64_t>(w, "cost")});
    }
    r.second_level = std::move(sl);
  }
  validate(r);
  return r;
}

IngestResult ingest_text(std::string_view text, const IngestConfig& config) {
  IngestResult out;
  std::size_t line_no = 0;
  std::size_t lines = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    ++lines;
    try {
      out.records.push_back(parse_json_line(line));
    } catch (const LogSchemaError& e) {
      throw LogSchemaError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      out.rejected.push_back({line_no, e.what()});
    }
  }
  if (lines == 0) throw std::runtime_error("quote log is empty");
  if (static_cast<double>(out.rejected.size()) >
      config.max_malformed_fraction * static_cast<double>(lines)) {
    const auto& first = out.rejected.front();
    throw std::runtime_error(std::to_string(out.rejected.size()) + " of " + std::to_string(lines) +
                             " lines malformed; first at line " + std::to_string(first.line) +
                             ": " + first.message);
  }
  return out;
}

IngestResult ingest(const std::string& path, const IngestConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open quote log '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_text(buf.str(), config);
}

void write_log(const std::string& path, std::span<const ChoiceRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write quote log '" + path + "'");
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

TrainingSet to_training_set(std::span<const ChoiceRecord> records,
                            std::optional<FeatureSchema> schema) {
  TrainingSet data;
  if (schema) {
    data.schema = std::move(*schema);
  } else {
    std::vector<RawFeatures> raw;
    raw.reserve(records.size());
    for (const auto& r : records) raw.push_back(r.features);
    data.schema = FeatureSchema::infer(raw);
  }
  data.rows.reserve(records.size());
  for (const auto& r : records) {
    TrainingRow row;
    row.x = data.schema.encode(r.features);
    row.obs = ChoiceObservation::from_prices(r.calendar(), r.prices(), r.chosen);
    row.timestamp = r.timestamp;
    row.canceled = r.canceled;
    data.rows.push_back(std::move(row));
  }
  return data;
}

}  // namespace schedprice
