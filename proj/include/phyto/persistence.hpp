#pragma once

// Durable timestamped logging into size-bounded CSV segments, HTML page
// emission for live plots, and timed replay of recorded logs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "phyto/core.hpp"
#include "phyto/format.hpp"

namespace phyto::store {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kDefaultCapacityBytes = 512ULL << 20;  // 512 MB flash
inline constexpr std::uint64_t kDefaultSegmentBytes = 1ULL << 20;

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string csv_header(std::span<const std::string> schema) {
  std::string h = "timestamp_ms";
  for (const auto& c : schema) h += "," + c;
  return h;
}

/// Throws naming the missing and extra channels when the record does not
/// carry exactly the schema's channels in schema order.
inline void check_schema(const Record& r, std::span<const std::string> schema) {
  bool same = r.values.size() == schema.size();
  for (std::size_t i = 0; same && i < schema.size(); ++i) same = r.values[i].first == schema[i];
  if (same) return;
  std::string missing, extra;
  for (const auto& c : schema) {
    if (!r.value(c)) missing += (missing.empty() ? "" : ",") + c;
  }
  for (const auto& [name, v] : r.values) {
    if (std::find(schema.begin(), schema.end(), name) == schema.end()) extra += (extra.empty() ? "" : ",") + name;
  }
  throw StoreError("record does not match log schema (missing: [" + missing + "], extra: [" + extra +
                   "]" + (missing.empty() && extra.empty() ? ", order differs" : "") + ")");
}

inline std::string format_line(const Record& r) {
  std::string line = std::to_string(r.timestamp_ms);
  for (const auto& [name, v] : r.values) {
    line += ',';
    line += format_double(v);
  }
  return line;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline Record parse_line(std::string_view line, std::span<const std::string> schema) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto cells = split_csv(line);
  if (cells.size() != schema.size() + 1) {
    throw StoreError("log line has " + std::to_string(cells.size()) + " columns, expected " +
                     std::to_string(schema.size() + 1));
  }
  Record r;
  auto ts = parse_int(cells[0]);
  if (!ts) throw StoreError("bad timestamp '" + std::string(cells[0]) + "'");
  r.timestamp_ms = *ts;
  r.values.reserve(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    auto v = parse_double(cells[i + 1]);
    if (!v) throw StoreError("bad value '" + std::string(cells[i + 1]) + "' in column " + schema[i]);
    r.values.emplace_back(schema[i], *v);
  }
  return r;
}

inline std::vector<std::string> parse_header(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto cells = split_csv(line);
  if (cells.empty() || cells[0] != "timestamp_ms") throw StoreError("log header must start with timestamp_ms");
  std::vector<std::string> schema;
  for (std::size_t i = 1; i < cells.size(); ++i) schema.emplace_back(cells[i]);
  return schema;
}

struct LoadedLog {
  std::vector<std::string> schema;
  std::vector<Record> records;
};

inline void read_csv_into(const fs::path& file, LoadedLog& log) {
  std::ifstream in(file);
  if (!in) throw StoreError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) return;
  auto schema = parse_header(line);
  if (log.schema.empty()) log.schema = schema;
  else if (schema != log.schema) throw StoreError("segment " + file.string() + " has a different schema");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    log.records.push_back(parse_line(line, log.schema));
  }
}

inline constexpr std::string_view kSegmentPrefix = "segment-";
inline constexpr std::string_view kSegmentSuffix = ".csv";

inline std::vector<fs::path> list_segments(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with(kSegmentPrefix) && name.ends_with(kSegmentSuffix)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Loads a log directory (all segments, oldest first) or a single CSV file.
inline LoadedLog read_log(const fs::path& path) {
  LoadedLog log;
  if (fs::is_directory(path)) {
    for (const auto& seg : list_segments(path)) read_csv_into(seg, log);
  } else {
    read_csv_into(path, log);
  }
  return log;
}

struct LogStoreSettings {
  fs::path directory;
  std::uint64_t capacity_bytes = kDefaultCapacityBytes;
  std::uint64_t segment_bytes = kDefaultSegmentBytes;
};

/// Appends records to numbered segment files; once the total exceeds the
/// capacity the oldest whole segments are deleted.
class LogStore {
 public:
  LogStore(LogStoreSettings settings, std::vector<std::string> schema)
      : settings_(std::move(settings)), schema_(std::move(schema)), header_(csv_header(schema_) + "\n") {
    if (schema_.empty()) throw ConfigError("log store: empty schema");
    if (settings_.segment_bytes <= header_.size()) throw ConfigError("log store: segment size smaller than header");
    if (settings_.capacity_bytes < 2 * settings_.segment_bytes) {
      throw ConfigError("log store: capacity must hold at least two segments");
    }
    fs::create_directories(settings_.directory);
    for (const auto& seg : list_segments(settings_.directory)) {
      std::ifstream in(seg);
      std::string first;
      std::getline(in, first);
      if (parse_header(first) != schema_) throw StoreError("existing segment " + seg.string() + " has a different schema");
      Segment s{seg, fs::file_size(seg), index_of(seg)};
      // Resume after the last stored timestamp.
      std::string line, last;
      while (std::getline(in, line)) {
        if (!line.empty()) last = line;
      }
      if (!last.empty()) last_ts_ = parse_line(last, schema_).timestamp_ms;
      segments_.push_back(s);
    }
    for (const auto& s : segments_) total_ += s.bytes;
  }

  void append(const Record& r) {
    check_schema(r, schema_);
    if (last_ts_ && r.timestamp_ms <= *last_ts_) {
      throw StoreError("log store: timestamp " + std::to_string(r.timestamp_ms) + " is not after the last stored " +
                       std::to_string(*last_ts_) + " in " + settings_.directory.string());
    }
    const std::string line = format_line(r) + "\n";
    if (segments_.empty() || segments_.back().bytes + line.size() > settings_.segment_bytes) open_segment();
    auto& seg = segments_.back();
    if (!out_.is_open()) out_.open(seg.path, std::ios::app | std::ios::binary);
    out_ << line;
    out_.flush();
    if (!out_) throw StoreError("log store: write failed for " + seg.path.string());
    seg.bytes += line.size();
    total_ += line.size();
    last_ts_ = r.timestamp_ms;
    while (total_ > settings_.capacity_bytes && segments_.size() > 1) {
      total_ -= segments_.front().bytes;
      fs::remove(segments_.front().path);
      segments_.erase(segments_.begin());
    }
  }

  std::vector<Record> read_all() const { return read_log(settings_.directory).records; }
  std::uint64_t total_bytes() const { return total_; }
  std::vector<fs::path> segments() const {
    std::vector<fs::path> out;
    for (const auto& s : segments_) out.push_back(s.path);
    return out;
  }
  const std::vector<std::string>& schema() const { return schema_; }
  const LogStoreSettings& settings() const { return settings_; }

 private:
  struct Segment {
    fs::path path;
    std::uint64_t bytes = 0;
    std::uint64_t index = 0;
  };

  static std::uint64_t index_of(const fs::path& p) {
    auto name = p.filename().string();
    auto digits = name.substr(kSegmentPrefix.size(), name.size() - kSegmentPrefix.size() - kSegmentSuffix.size());
    return static_cast<std::uint64_t>(parse_int(digits).value_or(0));
  }

  void open_segment() {
    const std::uint64_t next = segments_.empty() ? 1 : segments_.back().index + 1;
    char name[64];
    std::snprintf(name, sizeof name, "%s%08llu%s", kSegmentPrefix.data(), static_cast<unsigned long long>(next),
                  kSegmentSuffix.data());
    Segment s{settings_.directory / name, header_.size(), next};
    out_.close();
    out_.clear();
    out_.open(s.path, std::ios::trunc | std::ios::binary);
    out_ << header_;
    if (!out_) throw StoreError("log store: cannot create " + s.path.string());
    total_ += header_.size();
    segments_.push_back(std::move(s));
  }

  LogStoreSettings settings_;
  std::vector<std::string> schema_;
  std::string header_;
  std::vector<Segment> segments_;
  std::uint64_t total_ = 0;
  std::optional<TimestampMs> last_ts_;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// HTML

inline std::string escape_xml(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Self-contained XHTML page: one inline SVG trace per channel plus the data
/// table. Written to a temporary file and renamed into place.
inline std::string render_html(std::span<const Record> records, std::span<const std::string> schema,
                               std::string_view title) {
  std::ostringstream o;
  o << "<!DOCTYPE html>\n<html xmlns=\"http://www.w3.org/1999/xhtml\" lang=\"en\">\n<head>\n"
    << "<meta charset=\"utf-8\"/>\n<meta http-equiv=\"refresh\" content=\"10\"/>\n<title>" << escape_xml(title)
    << "</title>\n<style>body{font-family:sans-serif}table{border-collapse:collapse}td,th{border:1px solid #ccc;"
       "padding:2px 6px;font-size:12px}svg{border:1px solid #ddd;margin:4px}.banner{color:#a00;font-weight:bold}"
       "</style>\n</head>\n<body>\n<h1>"
    << escape_xml(title) << "</h1>\n";
  if (records.empty()) {
    o << "<p class=\"banner\">no data</p>\n</body>\n</html>\n";
    return o.str();
  }
  o << "<p>" << records.size() << " records, " << escape_xml(iso8601_utc(records.front().timestamp_ms)) << " to "
    << escape_xml(iso8601_utc(records.back().timestamp_ms)) << "</p>\n";

  constexpr double kWidth = 600.0, kHeight = 120.0;
  const double t0 = double(records.front().timestamp_ms);
  const double span_t = std::max(1.0, double(records.back().timestamp_ms) - t0);
  for (std::size_t c = 0; c < schema.size(); ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : records) {
      lo = std::min(lo, r.values[c].second);
      hi = std::max(hi, r.values[c].second);
    }
    const double span_v = hi > lo ? hi - lo : 1.0;
    o << "<div class=\"plot\"><h2>" << escape_xml(schema[c]) << "</h2>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
      << kWidth << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
      << "\"><polyline fill=\"none\" stroke=\"#1565c0\" stroke-width=\"1\" points=\"";
    for (const auto& r : records) {
      const double x = (double(r.timestamp_ms) - t0) / span_t * kWidth;
      const double y = kHeight - (r.values[c].second - lo) / span_v * kHeight;
      o << format_double(std::round(x * 100.0) / 100.0) << ',' << format_double(std::round(y * 100.0) / 100.0) << ' ';
    }
    o << "\"/></svg></div>\n";
  }

  o << "<table>\n<thead><tr><th>time</th>";
  for (const auto& c : schema) o << "<th>" << escape_xml(c) << "</th>";
  o << "</tr></thead>\n<tbody>\n";
  for (const auto& r : records) {
    o << "<tr class=\"row\"><td>" << escape_xml(iso8601_utc(r.timestamp_ms)) << "</td>";
    for (const auto& [name, v] : r.values) o << "<td>" << format_double(v) << "</td>";
    o << "</tr>\n";
  }
  o << "</tbody>\n</table>\n</body>\n</html>\n";
  return o.str();
}

/// Records with from_ms <= timestamp < to_ms.
inline std::vector<Record> window_of(std::span<const Record> records, TimestampMs from_ms, TimestampMs to_ms) {
  std::vector<Record> out;
  for (const auto& r : records) {
    if (r.timestamp_ms >= from_ms && r.timestamp_ms < to_ms) out.push_back(r);
  }
  return out;
}

inline void write_atomically(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    out << content;
    if (!out) throw StoreError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void emit_html(std::span<const Record> records, std::span<const std::string> schema, const fs::path& path,
                      std::string_view title = "Phytosensor live data") {
  write_atomically(path, render_html(records, schema, title));
}

// ---------------------------------------------------------------------------
// Replay

/// Re-emits records in order, sleeping the recorded gap divided by
/// `speed_factor`; an infinite factor replays as fast as possible.
inline std::size_t replay(std::span<const Record> records, double speed_factor,
                          const std::function<void(const Record&)>& emit) {
  if (!(speed_factor > 0.0)) throw InputError("replay: speed factor must be positive");
  const bool timed = std::isfinite(speed_factor);
  const auto start = std::chrono::steady_clock::now();
  for (const auto& r : records) {
    if (timed) {
      const double offset_ms = double(r.timestamp_ms - records.front().timestamp_ms) / speed_factor;
      std::this_thread::sleep_until(start + std::chrono::microseconds(static_cast<std::int64_t>(offset_ms * 1000.0)));
    }
    emit(r);
  }
  return records.size();
}

}  // namespace phyto::store
