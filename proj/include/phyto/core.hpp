#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace phyto {

/// Raised for invalid experiment, detector, binding or schedule configuration.
/// Always detected before an acquisition loop starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a numeric routine receives input outside its domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using TimestampMs = std::int64_t;

enum class ChannelKind {
  biopotential1,
  biopotential2,
  impedance1,
  impedance2,
  transpiration,
  sap_flow,
  soil_moisture,
  soil_temperature,
  air_temperature,
  air_humidity,
  air_pressure,
  light,
  magnetometer_xyz,
  accelerometer_xyz,
  rf_power,
  external_temperature,
};

inline constexpr std::array<ChannelKind, 16> kAllChannelKinds = {
    ChannelKind::biopotential1,     ChannelKind::biopotential2,
    ChannelKind::impedance1,        ChannelKind::impedance2,
    ChannelKind::transpiration,     ChannelKind::sap_flow,
    ChannelKind::soil_moisture,     ChannelKind::soil_temperature,
    ChannelKind::air_temperature,   ChannelKind::air_humidity,
    ChannelKind::air_pressure,      ChannelKind::light,
    ChannelKind::magnetometer_xyz,  ChannelKind::accelerometer_xyz,
    ChannelKind::rf_power,          ChannelKind::external_temperature,
};

inline constexpr std::string_view to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::biopotential1: return "biopotential1";
    case ChannelKind::biopotential2: return "biopotential2";
    case ChannelKind::impedance1: return "impedance1";
    case ChannelKind::impedance2: return "impedance2";
    case ChannelKind::transpiration: return "transpiration";
    case ChannelKind::sap_flow: return "sap_flow";
    case ChannelKind::soil_moisture: return "soil_moisture";
    case ChannelKind::soil_temperature: return "soil_temperature";
    case ChannelKind::air_temperature: return "air_temperature";
    case ChannelKind::air_humidity: return "air_humidity";
    case ChannelKind::air_pressure: return "air_pressure";
    case ChannelKind::light: return "light";
    case ChannelKind::magnetometer_xyz: return "magnetometer_xyz";
    case ChannelKind::accelerometer_xyz: return "accelerometer_xyz";
    case ChannelKind::rf_power: return "rf_power";
    case ChannelKind::external_temperature: return "external_temperature";
  }
  return "unknown";
}

inline std::optional<ChannelKind> parse_channel_kind(std::string_view text) {
  for (auto kind : kAllChannelKinds) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

/// Sampling group; acquisition always runs voltage, then impedance, then the rest.
enum class ChannelGroup { voltage = 0, impedance = 1, environment = 2 };

inline constexpr ChannelGroup group_of(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::biopotential1:
    case ChannelKind::biopotential2:
      return ChannelGroup::voltage;
    case ChannelKind::impedance1:
    case ChannelKind::impedance2:
      return ChannelGroup::impedance;
    default:
      return ChannelGroup::environment;
  }
}

/// Declared range, unit and device quantization step of a channel.
struct ChannelSpec {
  double lo;
  double hi;
  std::string_view unit;
  double resolution;
};

/// Resolution of biopotential readings: 64 nV.
inline constexpr double kBiopotentialResolution = 64e-9;

/// LM35 conversion factor, volts per degree Celsius.
inline constexpr double kLm35VoltsPerDegree = 0.010;

/// 22-bit ADC over a 2.5 V reference.
inline constexpr double kAdcReferenceVolts = 2.5;
inline constexpr int kAdcBits = 22;
inline constexpr double kAdcLsbVolts = kAdcReferenceVolts / double(1 << kAdcBits);

inline constexpr ChannelSpec channel_spec(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::biopotential1:
    case ChannelKind::biopotential2:
      return {-2.5, 2.5, "V", kBiopotentialResolution};
    case ChannelKind::impedance1:  // |Z|
      return {0.0, 1e9, "ohm", 1e-3};
    case ChannelKind::impedance2:  // Im(Z)
      return {-1e9, 1e9, "ohm", 1e-3};
    case ChannelKind::transpiration: return {0.0, 100.0, "%", 0.01};
    case ChannelKind::sap_flow: return {-2.5, 2.5, "V", 1e-6};
    case ChannelKind::soil_moisture: return {0.0, 100.0, "%", 0.01};
    case ChannelKind::soil_temperature: return {-40.0, 85.0, "degC", 0.01};
    case ChannelKind::air_temperature: return {-40.0, 85.0, "degC", 0.01};
    case ChannelKind::air_humidity: return {0.0, 100.0, "%", 0.01};
    case ChannelKind::air_pressure: return {300.0, 1100.0, "hPa", 0.01};
    case ChannelKind::light: return {0.0, 200000.0, "lux", 0.1};
    case ChannelKind::magnetometer_xyz: return {0.0, 1e-3, "T", 1e-9};
    case ChannelKind::accelerometer_xyz: return {0.0, 160.0, "m/s2", 1e-3};
    case ChannelKind::rf_power: return {-100.0, 20.0, "dBm", 0.1};
    case ChannelKind::external_temperature:
      return {-40.0, 110.0, "degC", kAdcLsbVolts / kLm35VoltsPerDegree};
  }
  return {0.0, 0.0, "", 1.0};
}

struct ChannelId {
  std::string name;
  ChannelKind kind = ChannelKind::biopotential1;

  friend bool operator==(const ChannelId&, const ChannelId&) = default;
};

/// One acquisition cycle: timestamp plus readings in schedule order.
struct Record {
  TimestampMs timestamp_ms = 0;
  std::vector<std::pair<std::string, double>> values;

  std::optional<double> value(std::string_view channel) const {
    for (const auto& [name, v] : values) {
      if (name == channel) return v;
    }
    return std::nullopt;
  }

  friend bool operator==(const Record&, const Record&) = default;
};

/// Rounds `raw` to the nearest multiple of `resolution`, halves away from zero.
inline double quantize(double raw, double resolution) {
  if (!std::isfinite(raw)) throw InputError("quantize: non-finite input");
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw InputError("quantize: resolution must be positive and finite");
  }
  return resolution * std::round(raw / resolution);
}

/// Quantizes and clamps into the channel's declared range.
inline double quantize_reading(ChannelKind kind, double raw) {
  const auto spec = channel_spec(kind);
  const double lo = spec.resolution * std::ceil(spec.lo / spec.resolution);
  const double hi = spec.resolution * std::floor(spec.hi / spec.resolution);
  return std::clamp(quantize(raw, spec.resolution), lo, hi);
}

inline constexpr double kMinPeriodSeconds = 0.1;
inline constexpr double kMaxPeriodSeconds = 100.0;

struct AcquisitionSchedule {
  double period_s = 1.0;
  double stimulation_interval_s = 10.0;
  std::vector<ChannelId> channel_order;

  TimestampMs period_ms() const { return static_cast<TimestampMs>(std::llround(period_s * 1000.0)); }
};

struct ScheduleConfig {
  double period_s = 1.0;
  double stimulation_interval_s = 10.0;
  std::vector<ChannelId> channels;
};

/// Every channel kind once, named after its kind.
inline std::vector<ChannelId> default_channels() {
  std::vector<ChannelId> out;
  for (auto kind : kAllChannelKinds) out.push_back({std::string(to_string(kind)), kind});
  return out;
}

inline AcquisitionSchedule build_schedule(const ScheduleConfig& config) {
  if (!std::isfinite(config.period_s) || config.period_s < kMinPeriodSeconds ||
      config.period_s > kMaxPeriodSeconds) {
    throw ConfigError("schedule: period between measurements must lie in [0.1, 100] s, got " +
                      std::to_string(config.period_s));
  }
  if (!(config.stimulation_interval_s > 0.0)) {
    throw ConfigError("schedule: stimulation interval must be positive");
  }
  if (config.channels.empty()) throw ConfigError("schedule: no channels configured");
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const auto& name = config.channels[i].name;
    if (name.empty() || name == "0") throw ConfigError("schedule: invalid channel name '" + name + "'");
    for (std::size_t j = 0; j < i; ++j) {
      if (config.channels[j].name == name) throw ConfigError("schedule: duplicate channel name '" + name + "'");
    }
  }

  AcquisitionSchedule schedule;
  schedule.period_s = config.period_s;
  schedule.stimulation_interval_s = config.stimulation_interval_s;
  schedule.channel_order = config.channels;
  std::stable_sort(schedule.channel_order.begin(), schedule.channel_order.end(),
                   [](const ChannelId& a, const ChannelId& b) {
                     return static_cast<int>(group_of(a.kind)) < static_cast<int>(group_of(b.kind));
                   });
  return schedule;
}

}  // namespace phyto
