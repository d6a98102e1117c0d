#pragma once

// Detector bank and numeric processors. Every detector is a pure function of
// an immutable pipe snapshot and the clock, and writes one entry into the
// cycle's output vector: 1 (condition true), -1 (false), 0 (not executed),
// or a number for the numeric processors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phyto/core.hpp"
#include "phyto/format.hpp"
#include "phyto/pipeline.hpp"

namespace phyto::detect {

enum class Verdict : int { yes = 1, no = -1, skipped = 0 };

enum class DetectorKind {
  time_interval,
  peak,
  cyclical_change,
  noise_level,
  gradient_change,
  time_of_day,
  mean,
  stddev,
  zscore,
  pathogenicity_status,
};

inline constexpr std::string_view to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::time_interval: return "time_interval";
    case DetectorKind::peak: return "peak";
    case DetectorKind::cyclical_change: return "cyclical_change";
    case DetectorKind::noise_level: return "noise_level";
    case DetectorKind::gradient_change: return "gradient_change";
    case DetectorKind::time_of_day: return "time_of_day";
    case DetectorKind::mean: return "mean";
    case DetectorKind::stddev: return "stddev";
    case DetectorKind::zscore: return "zscore";
    case DetectorKind::pathogenicity_status: return "pathogenicity_status";
  }
  return "unknown";
}

inline std::optional<DetectorKind> parse_detector_kind(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(DetectorKind::pathogenicity_status); ++i) {
    auto k = static_cast<DetectorKind>(i);
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// Numeric processors write measurements; the rest write verdicts.
inline constexpr bool is_numeric(DetectorKind k) {
  switch (k) {
    case DetectorKind::noise_level:
    case DetectorKind::mean:
    case DetectorKind::stddev:
    case DetectorKind::zscore:
    case DetectorKind::pathogenicity_status:
      return true;
    default:
      return false;
  }
}

/// Clock-only detectors need no input samples.
inline constexpr bool is_clock_gate(DetectorKind k) {
  return k == DetectorKind::time_interval || k == DetectorKind::time_of_day;
}

inline constexpr std::string_view kDisabledChannel = "0";

struct DetectorConfig {
  std::string id;
  DetectorKind kind = DetectorKind::peak;
  std::string input_channel;  // "0" switches the detector off
  pipeline::Tier tier = pipeline::Tier::short_term;
  std::map<std::string, std::string> params;

  bool enabled() const { return input_channel != kDisabledChannel; }

  double number(const std::string& key, double fallback) const {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    auto v = parse_double(it->second);
    if (!v) throw ConfigError("detector " + id + ": parameter '" + key + "' is not a number");
    return *v;
  }
};

struct OutputEntry {
  std::string id;
  bool numeric = false;
  bool executed = false;
  double value = 0.0;  // +-1 for verdicts, 0 when not executed

  friend bool operator==(const OutputEntry&, const OutputEntry&) = default;
};

struct OutputVector {
  std::uint64_t cycle_id = 0;
  TimestampMs clock_ms = 0;
  std::vector<OutputEntry> entries;

  const OutputEntry* find(std::string_view id) const {
    for (const auto& e : entries) {
      if (e.id == id) return &e;
    }
    return nullptr;
  }

  friend bool operator==(const OutputVector&, const OutputVector&) = default;
};

// ---------------------------------------------------------------------------
// Statistics helpers

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

inline constexpr double kMadToSigma = 1.4826;

/// 1.4826 x median absolute deviation.
inline double robust_sigma(std::span<const double> window, double centre) {
  std::vector<double> dev;
  dev.reserve(window.size());
  for (double x : window) dev.push_back(std::abs(x - centre));
  return kMadToSigma * median(std::move(dev));
}

inline double mean_of(std::span<const double> w) {
  double acc = 0.0;
  for (double x : w) acc += x;
  return acc / static_cast<double>(w.size());
}

/// Sample standard deviation (n - 1).
inline double stddev_of(std::span<const double> w) {
  const double m = mean_of(w);
  double acc = 0.0;
  for (double x : w) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(w.size() - 1));
}

// ---------------------------------------------------------------------------
// Detectors

// Below this the MAD estimate is too unstable for a multi-sigma test.
inline constexpr std::size_t kMinPeakSamples = 20;

/// 1 iff some sample among the `recent` newest deviates from the window median
/// by more than threshold_sigma robust sigmas. `recent` = 0 scans the window.
inline Verdict peak_detect(std::span<const double> window, double threshold_sigma, std::size_t recent = 0) {
  if (window.size() < kMinPeakSamples) return Verdict::skipped;
  const double centre = median({window.begin(), window.end()});
  const double limit = threshold_sigma * robust_sigma(window, centre);
  const std::size_t scan = (recent == 0 || recent > window.size()) ? window.size() : recent;
  double worst = 0.0;
  for (std::size_t i = window.size() - scan; i < window.size(); ++i) worst = std::max(worst, std::abs(window[i] - centre));
  return worst > limit ? Verdict::yes : Verdict::no;
}

struct TimedSample {
  TimestampMs t_ms = 0;
  double value = 0.0;
};

/// Least-squares slope in value units per hour.
inline std::optional<double> least_squares_slope_per_hour(std::span<const TimedSample> window) {
  if (window.size() < 2) return std::nullopt;
  const TimestampMs t0 = window.front().t_ms;
  double tm = 0.0, xm = 0.0;
  for (const auto& s : window) {
    tm += double(s.t_ms - t0) / 3.6e6;
    xm += s.value;
  }
  tm /= double(window.size());
  xm /= double(window.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& s : window) {
    const double dt = double(s.t_ms - t0) / 3.6e6 - tm;
    sxy += dt * (s.value - xm);
    sxx += dt * dt;
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

inline Verdict gradient_change(std::span<const TimedSample> window, double slope_threshold_per_hour) {
  const auto slope = least_squares_slope_per_hour(window);
  if (!slope) return Verdict::skipped;
  return std::abs(*slope) > slope_threshold_per_hour ? Verdict::yes : Verdict::no;
}

inline constexpr std::size_t kMinNoiseSamples = 3;

/// Population standard deviation of first differences, divided by sqrt(2):
/// for white noise this recovers the per-sample sigma, while slow trends
/// contribute little.
inline std::optional<double> noise_level(std::span<const double> window) {
  if (window.size() < kMinNoiseSamples) return std::nullopt;
  std::vector<double> diff(window.size() - 1);
  for (std::size_t i = 1; i < window.size(); ++i) diff[i - 1] = window[i] - window[i - 1];
  const double m = mean_of(diff);
  double acc = 0.0;
  for (double d : diff) acc += (d - m) * (d - m);
  return std::sqrt(acc / double(diff.size())) / std::sqrt(2.0);
}

/// Normalized autocorrelation at `lag`.
inline std::optional<double> autocorrelation(std::span<const double> window, std::size_t lag) {
  if (lag == 0 || window.size() < 2 * lag) return std::nullopt;
  const double m = mean_of(window);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    const double d = window[i] - m;
    den += d * d;
    if (i + lag < window.size()) num += d * (window[i + lag] - m);
  }
  if (den == 0.0) return 0.0;
  return num / den;
}

inline Verdict cyclical_change(std::span<const double> window, std::size_t period_samples, double min_correlation) {
  const auto r = autocorrelation(window, period_samples);
  if (!r) return Verdict::skipped;
  return *r > min_correlation ? Verdict::yes : Verdict::no;
}

/// Open for [k*interval + offset, k*interval + offset + width).
inline Verdict time_interval_gate(TimestampMs clock_ms, double interval_s, double width_s, double offset_s = 0.0) {
  const auto interval = static_cast<std::int64_t>(std::llround(interval_s * 1000.0));
  const auto width = static_cast<std::int64_t>(std::llround(width_s * 1000.0));
  const auto offset = static_cast<std::int64_t>(std::llround(offset_s * 1000.0));
  if (interval <= 0) return Verdict::skipped;
  std::int64_t phase = (clock_ms - offset) % interval;
  if (phase < 0) phase += interval;
  return phase < width ? Verdict::yes : Verdict::no;
}

/// Wall-clock window [start, end) in minutes after UTC midnight; wraps past midnight when end < start.
inline Verdict time_of_day_gate(TimestampMs clock_ms, int start_minute, int end_minute) {
  constexpr std::int64_t kDay = 86'400'000;
  std::int64_t r = clock_ms % kDay;
  if (r < 0) r += kDay;
  const std::int64_t start = std::int64_t(start_minute) * 60'000;
  const std::int64_t end = std::int64_t(end_minute) * 60'000;
  const bool open = start <= end ? (r >= start && r < end) : (r >= start || r < end);
  return open ? Verdict::yes : Verdict::no;
}

/// Parses "HH:MM" into minutes after midnight.
inline std::optional<int> parse_clock_time(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  const auto h = parse_int(s.substr(0, colon));
  const auto m = parse_int(s.substr(colon + 1));
  if (!h || !m || *h < 0 || *h > 24 || *m < 0 || *m > 59 || (*h == 24 && *m != 0)) return std::nullopt;
  return int(*h * 60 + *m);
}

inline std::optional<double> window_mean(std::span<const double> w) {
  if (w.empty()) return std::nullopt;
  return mean_of(w);
}

inline std::optional<double> window_stddev(std::span<const double> w) {
  if (w.size() < 2) return std::nullopt;
  return stddev_of(w);
}

/// z of the newest sample against the mean and sigma of the others; empty
/// when fewer than two reference samples or zero spread.
inline std::optional<double> zscore_latest(std::span<const double> w) {
  if (w.size() < 3) return std::nullopt;
  const auto ref = w.first(w.size() - 1);
  const double sigma = stddev_of(ref);
  if (sigma == 0.0) return std::nullopt;
  return (w.back() - mean_of(ref)) / sigma;
}

enum class HealthStatus : int { green = 0, yellow = 1, red = 2 };

inline HealthStatus pathogenicity_status(double z, double z_yellow = 2.0, double z_red = 4.0) {
  const double a = std::abs(z);
  if (a < z_yellow) return HealthStatus::green;
  if (a < z_red) return HealthStatus::yellow;
  return HealthStatus::red;
}

// ---------------------------------------------------------------------------
// Bank

/// Rejects duplicate ids, unknown channels and malformed parameters.
inline void validate_detectors(std::span<const DetectorConfig> configs, const std::set<std::string>& channels) {
  std::set<std::string> seen;
  for (const auto& c : configs) {
    if (c.id.empty()) throw ConfigError("detector with empty id");
    if (!seen.insert(c.id).second) throw ConfigError("duplicate detector id '" + c.id + "'");
    if (c.enabled() && !is_clock_gate(c.kind) && !channels.contains(c.input_channel)) {
      throw ConfigError("detector " + c.id + ": unknown channel '" + c.input_channel + "'");
    }
    switch (c.kind) {
      case DetectorKind::peak:
        if (!(c.number("threshold_sigma", 5.0) > 0.0)) throw ConfigError("detector " + c.id + ": threshold_sigma must be > 0");
        if (c.number("recent", 0.0) < 0.0) throw ConfigError("detector " + c.id + ": recent must be >= 0");
        break;
      case DetectorKind::cyclical_change:
        if (c.number("period_samples", 0.0) < 1.0) throw ConfigError("detector " + c.id + ": period_samples required");
        break;
      case DetectorKind::gradient_change:
        if (!(c.number("slope_per_hour", -1.0) >= 0.0)) throw ConfigError("detector " + c.id + ": slope_per_hour required");
        break;
      case DetectorKind::time_interval:
        if (!(c.number("interval_s", 0.0) > 0.0)) throw ConfigError("detector " + c.id + ": interval_s must be > 0");
        break;
      case DetectorKind::time_of_day:
        for (const char* key : {"start", "end"}) {
          auto it = c.params.find(key);
          if (it == c.params.end() || !parse_clock_time(it->second)) {
            throw ConfigError("detector " + c.id + ": '" + key + "' must be HH:MM");
          }
        }
        break;
      case DetectorKind::pathogenicity_status:
        if (!(c.number("z_yellow", 2.0) < c.number("z_red", 4.0))) {
          throw ConfigError("detector " + c.id + ": z_yellow must be below z_red");
        }
        break;
      default:
        break;
    }
  }
}

inline std::vector<TimedSample> channel_series(const std::vector<Record>& records, std::string_view channel) {
  std::vector<TimedSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (auto v = r.value(channel)) out.push_back({r.timestamp_ms, *v});
  }
  return out;
}

/// Uses the newest `window` samples when the parameter is present.
inline std::vector<TimedSample> trimmed_series(const DetectorConfig& c, const std::vector<Record>& records) {
  auto series = channel_series(records, c.input_channel);
  const double w = c.number("window", 0.0);
  if (w >= 1.0 && static_cast<std::size_t>(w) < series.size()) {
    series.erase(series.begin(), series.end() - static_cast<std::ptrdiff_t>(w));
  }
  return series;
}

inline OutputEntry verdict_entry(const DetectorConfig& c, Verdict v) {
  return {c.id, false, v != Verdict::skipped, static_cast<double>(static_cast<int>(v))};
}

inline OutputEntry numeric_entry(const DetectorConfig& c, std::optional<double> v) {
  return {c.id, true, v.has_value(), v.value_or(0.0)};
}

/// Runs one detector against its tier snapshot. A missing snapshot means the
/// tier did not signal new data this cycle.
inline OutputEntry evaluate_detector(const DetectorConfig& c, const pipeline::Snapshot& snapshot, TimestampMs clock_ms) {
  if (!c.enabled() || !snapshot) return is_numeric(c.kind) ? numeric_entry(c, std::nullopt) : verdict_entry(c, Verdict::skipped);

  switch (c.kind) {
    case DetectorKind::time_interval:
      return verdict_entry(c, time_interval_gate(clock_ms, c.number("interval_s", 10.0), c.number("width_s", 1.0),
                                                 c.number("offset_s", 0.0)));
    case DetectorKind::time_of_day:
      return verdict_entry(c, time_of_day_gate(clock_ms, *parse_clock_time(c.params.at("start")),
                                               *parse_clock_time(c.params.at("end"))));
    default:
      break;
  }

  const auto series = trimmed_series(c, *snapshot);
  std::vector<double> values;
  values.reserve(series.size());
  for (const auto& s : series) values.push_back(s.value);

  switch (c.kind) {
    case DetectorKind::peak:
      return verdict_entry(c, peak_detect(values, c.number("threshold_sigma", 5.0),
                                          static_cast<std::size_t>(c.number("recent", 0.0))));
    case DetectorKind::gradient_change:
      return verdict_entry(c, gradient_change(series, c.number("slope_per_hour", 0.0)));
    case DetectorKind::cyclical_change:
      return verdict_entry(c, cyclical_change(values, static_cast<std::size_t>(c.number("period_samples", 1.0)),
                                              c.number("min_correlation", 0.5)));
    case DetectorKind::noise_level:
      return numeric_entry(c, noise_level(values));
    case DetectorKind::mean:
      return numeric_entry(c, window_mean(values));
    case DetectorKind::stddev:
      return numeric_entry(c, window_stddev(values));
    case DetectorKind::zscore:
      return numeric_entry(c, zscore_latest(values));
    case DetectorKind::pathogenicity_status: {
      const auto z = zscore_latest(values);
      if (!z) return numeric_entry(c, std::nullopt);
      return numeric_entry(
          c, static_cast<double>(pathogenicity_status(*z, c.number("z_yellow", 2.0), c.number("z_red", 4.0))));
    }
    default:
      return verdict_entry(c, Verdict::skipped);
  }
}

using TierSnapshots = std::map<pipeline::Tier, pipeline::Snapshot>;

enum class Execution { sequential, parallel };

/// One entry per configured detector, in configuration order.
inline OutputVector run_detectors(std::span<const DetectorConfig> configs, const TierSnapshots& snapshots,
                                  TimestampMs clock_ms, std::uint64_t cycle_id = 0,
                                  Execution mode = Execution::sequential) {
  auto snapshot_for = [&snapshots](pipeline::Tier t) -> pipeline::Snapshot {
    auto it = snapshots.find(t);
    return it == snapshots.end() ? nullptr : it->second;
  };

  OutputVector out;
  out.cycle_id = cycle_id;
  out.clock_ms = clock_ms;
  out.entries.reserve(configs.size());
  if (mode == Execution::sequential) {
    for (const auto& c : configs) out.entries.push_back(evaluate_detector(c, snapshot_for(c.tier), clock_ms));
    return out;
  }
  std::vector<std::future<OutputEntry>> pending;
  pending.reserve(configs.size());
  for (const auto& c : configs) {
    pending.push_back(std::async(std::launch::async, [&c, snap = snapshot_for(c.tier), clock_ms] {
      return evaluate_detector(c, snap, clock_ms);
    }));
  }
  for (auto& f : pending) out.entries.push_back(f.get());
  return out;
}

}  // namespace phyto::detect
