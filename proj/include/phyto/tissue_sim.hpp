#pragma once

// Deterministic stand-in for the plant and its electrodes: Randles-style
// tissue impedance, biopotential dynamics with stimulus-evoked action and
// variation potentials, and the environmental sensor channels.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phyto/core.hpp"
#include "phyto/fra.hpp"
#include "phyto/random.hpp"

namespace phyto::sim {

struct TissueModel {
  double r_series = 1e3;
  double r_parallel = 1e4;
  double c_parallel = 1e-6;
  double noise_rms = 0.0;  // added to response samples, in response units

  /// Ideal resistor of `ohms`.
  static TissueModel resistor(double ohms) { return {ohms, 0.0, 0.0, 0.0}; }
};

inline void validate(const TissueModel& m) {
  if (!(m.r_series > 0.0) || !std::isfinite(m.r_series)) throw ConfigError("tissue: r_series must be positive");
  if (!(m.r_parallel >= 0.0) || !std::isfinite(m.r_parallel)) throw ConfigError("tissue: r_parallel must be >= 0");
  if (!(m.c_parallel >= 0.0) || !std::isfinite(m.c_parallel)) throw ConfigError("tissue: c_parallel must be >= 0");
  if (!(m.noise_rms >= 0.0)) throw ConfigError("tissue: noise_rms must be >= 0");
}

/// Z(f) = Rs + Rp / (1 + j 2 pi f Rp Cp)
inline std::complex<double> analytic_impedance(const TissueModel& m, double frequency_hz) {
  if (!(frequency_hz > 0.0)) throw InputError("analytic impedance: frequency must be positive");
  const double omega = 2.0 * std::numbers::pi * frequency_hz;
  const std::complex<double> denom(1.0, omega * m.r_parallel * m.c_parallel);
  return m.r_series + m.r_parallel / denom;
}

/// Steady-state current-proportional response to a sine excitation.
inline fra::ResponseBuffer tissue_response(const TissueModel& m, const fra::ExcitationWaveform& excitation,
                                           std::uint64_t seed) {
  const auto admittance = 1.0 / analytic_impedance(m, excitation.frequency_hz);
  const double gain = std::abs(admittance);
  const double shift = std::arg(admittance);
  const std::size_t n = excitation.samples.size();
  const auto cycles = fra::period_stable_cycles(excitation.frequency_hz, n, excitation.sample_rate_hz);

  fra::ResponseBuffer out{excitation.frequency_hz, excitation.sample_rate_hz, std::vector<double>(n)};
  SplitMix64 rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    const double base = cycles ? 2.0 * std::numbers::pi * double((*cycles * k) % n) / double(n)
                               : 2.0 * std::numbers::pi * excitation.frequency_hz * double(k) / excitation.sample_rate_hz;
    double v = excitation.amplitude_v * gain * std::sin(base + shift);
    if (m.noise_rms > 0.0) v += m.noise_rms * rng.gaussian();
    out.samples[k] = v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Biopotentials

enum class StimulusKind { touch, light, electrical, irrigation };

inline constexpr std::string_view to_string(StimulusKind k) {
  switch (k) {
    case StimulusKind::touch: return "touch";
    case StimulusKind::light: return "light";
    case StimulusKind::electrical: return "electrical";
    case StimulusKind::irrigation: return "irrigation";
  }
  return "unknown";
}

inline std::optional<StimulusKind> parse_stimulus_kind(std::string_view s) {
  for (auto k : {StimulusKind::touch, StimulusKind::light, StimulusKind::electrical, StimulusKind::irrigation}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct StimulusEvent {
  StimulusKind kind = StimulusKind::touch;
  TimestampMs time_ms = 0;
  double intensity = 1.0;

  friend bool operator==(const StimulusEvent&, const StimulusEvent&) = default;
};

struct BiopotentialProfile {
  double baseline_v = -0.05;
  double drift_v_per_hour = 0.0;
  double diurnal_amplitude_v = 1e-3;
  double diurnal_period_h = 24.0;
  double ap_amplitude_v = 1e-3;
  double ap_duration_s = 2.0;
  double vp_amplitude_v = 5e-4;
  double vp_duration_s = 20.0;
  double noise_rms_v = 5e-6;
  std::uint64_t seed = 1;
};

inline void validate(const BiopotentialProfile& p) {
  if (!(p.ap_duration_s > 0.0) || !(p.vp_duration_s > 0.0)) throw ConfigError("profile: durations must be positive");
  if (!(p.ap_duration_s < p.vp_duration_s)) throw ConfigError("profile: ap_duration must be shorter than vp_duration");
  if (!(p.diurnal_period_h > 0.0)) throw ConfigError("profile: diurnal period must be positive");
  if (!(p.noise_rms_v >= 0.0)) throw ConfigError("profile: noise_rms must be >= 0");
}

/// Biphasic raised-cosine pulse: unit positive lobe over [0, D), then a
/// quarter-height negative lobe over [D, 2D).
inline double ap_kernel(double tau_s, double duration_s) {
  if (tau_s < 0.0) return 0.0;
  const double d = duration_s;
  if (tau_s < d) return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * tau_s / d));
  if (tau_s < 2.0 * d) return -0.125 * (1.0 - std::cos(2.0 * std::numbers::pi * (tau_s - d) / d));
  return 0.0;
}

/// Alpha function with unit peak at duration/4, cut to zero from 5*duration.
inline double vp_kernel(double tau_s, double duration_s) {
  if (tau_s < 0.0 || tau_s >= 5.0 * duration_s) return 0.0;
  const double t = tau_s / (duration_s / 4.0);
  return t * std::exp(1.0 - t);
}

struct KernelWeights {
  double ap = 0.0;
  double vp = 0.0;
};

inline constexpr KernelWeights kernel_weights(StimulusKind k) {
  switch (k) {
    case StimulusKind::touch: return {1.0, 1.0};
    case StimulusKind::electrical: return {1.0, 0.0};
    case StimulusKind::light: return {0.0, 0.5};
    case StimulusKind::irrigation: return {0.0, 0.25};
  }
  return {};
}

/// Event-free trajectory: baseline, drift, diurnal wave.
inline double quiescent_biopotential(const BiopotentialProfile& p, TimestampMs t_ms, TimestampMs start_ms) {
  const double hours_since_start = double(t_ms - start_ms) / 3.6e6;
  const double hours_of_epoch = double(t_ms) / 3.6e6;
  return p.baseline_v + p.drift_v_per_hour * hours_since_start +
         p.diurnal_amplitude_v * std::sin(2.0 * std::numbers::pi * hours_of_epoch / p.diurnal_period_h);
}

/// Sum of event kernels active at t; later events are ignored.
inline double evoked_biopotential(const BiopotentialProfile& p, TimestampMs t_ms,
                                  std::span<const StimulusEvent> events) {
  double v = 0.0;
  for (const auto& e : events) {
    if (e.time_ms > t_ms) continue;
    const double tau = double(t_ms - e.time_ms) / 1000.0;
    const auto w = kernel_weights(e.kind);
    v += e.intensity * (w.ap * p.ap_amplitude_v * ap_kernel(tau, p.ap_duration_s) +
                        w.vp * p.vp_amplitude_v * vp_kernel(tau, p.vp_duration_s));
  }
  return v;
}

/// Unquantized biopotential. `stream` separates independent electrode noise.
inline double biopotential_at(const BiopotentialProfile& p, TimestampMs t_ms, std::span<const StimulusEvent> events,
                              TimestampMs start_ms = 0, std::uint64_t stream = 0) {
  double v = quiescent_biopotential(p, t_ms, start_ms) + evoked_biopotential(p, t_ms, events);
  if (p.noise_rms_v > 0.0) {
    SplitMix64 rng(mix_seed(p.seed, stream, static_cast<std::uint64_t>(t_ms)));
    v += p.noise_rms_v * rng.gaussian();
  }
  return v;
}

// ---------------------------------------------------------------------------
// Environment

struct EnvironmentModel {
  double air_temp_mean_c = 22.0;
  double air_temp_swing_c = 4.0;
  double humidity_mean_pct = 55.0;
  double humidity_swing_pct = 10.0;
  double daylight_peak_lux = 20000.0;
  double pressure_hpa = 1013.25;
  double magnetic_field_t = 50e-6;
  double gravity_ms2 = 9.80665;
  double rf_power_dbm = -60.0;
  double soil_moisture_pct = 35.0;
  double soil_temp_mean_c = 18.0;
  double lm35_offset_c = 0.5;  // object vs air
  std::uint64_t seed = 7;
};

inline double hour_of_day(TimestampMs t_ms) {
  constexpr std::int64_t kDay = 86'400'000;
  std::int64_t r = t_ms % kDay;
  if (r < 0) r += kDay;
  return double(r) / 3.6e6;
}

/// LM35 temperature as read through the 22-bit ADC: volts quantized at the
/// ADC step, converted back at +10 mV per degree.
inline double lm35_reading(double temperature_c) {
  const double volts = quantize(temperature_c * kLm35VoltsPerDegree, kAdcLsbVolts);
  return volts / kLm35VoltsPerDegree;
}

/// Environmental channels at `t`, quantized to device resolution.
inline std::vector<std::pair<ChannelKind, double>> environment_at(const EnvironmentModel& env, TimestampMs t_ms,
                                                                  std::span<const StimulusEvent> events = {}) {
  const double hod = hour_of_day(t_ms);
  // Daylight half-sine from 06:00 to 18:00, zero otherwise.
  const double sun = (hod > 6.0 && hod < 18.0) ? std::sin(std::numbers::pi * (hod - 6.0) / 12.0) : 0.0;
  // Temperature peaks mid-afternoon.
  const double warm = std::cos(2.0 * std::numbers::pi * (hod - 15.0) / 24.0);

  double irrigation = 0.0;
  for (const auto& e : events) {
    if (e.kind != StimulusKind::irrigation || e.time_ms > t_ms) continue;
    irrigation += e.intensity * std::exp(-double(t_ms - e.time_ms) / (6.0 * 3.6e6));
  }

  SplitMix64 rng(mix_seed(env.seed, static_cast<std::uint64_t>(t_ms)));
  auto noise = [&rng](double sigma) { return sigma * rng.gaussian(); };

  const double air_t = env.air_temp_mean_c + env.air_temp_swing_c * warm + noise(0.02);
  std::vector<std::pair<ChannelKind, double>> out;
  out.reserve(12);
  auto put = [&out](ChannelKind k, double v) { out.emplace_back(k, quantize_reading(k, v)); };
  put(ChannelKind::transpiration, 5.0 + 40.0 * sun + noise(0.2));
  put(ChannelKind::sap_flow, 0.05 + 0.2 * sun + 0.05 * irrigation + noise(1e-4));
  put(ChannelKind::soil_moisture, env.soil_moisture_pct + 10.0 * irrigation + noise(0.05));
  put(ChannelKind::soil_temperature, env.soil_temp_mean_c + 1.5 * warm + noise(0.01));
  put(ChannelKind::air_temperature, air_t);
  put(ChannelKind::air_humidity, env.humidity_mean_pct - env.humidity_swing_pct * warm + noise(0.1));
  put(ChannelKind::air_pressure, env.pressure_hpa + noise(0.05));
  put(ChannelKind::light, env.daylight_peak_lux * sun);
  put(ChannelKind::magnetometer_xyz, env.magnetic_field_t + noise(5e-8));
  put(ChannelKind::accelerometer_xyz, env.gravity_ms2 + noise(2e-3));
  put(ChannelKind::rf_power, env.rf_power_dbm + noise(0.5));
  out.emplace_back(ChannelKind::external_temperature,
                   std::clamp(lm35_reading(air_t + env.lm35_offset_c), -40.0, 110.0));
  return out;
}

// ---------------------------------------------------------------------------
// Simulator: one logical clock, one event writer, pure queries per timestamp.

class Simulator {
 public:
  Simulator(TissueModel tissue, BiopotentialProfile profile, EnvironmentModel env, std::vector<StimulusEvent> events,
            TimestampMs start_ms, std::uint64_t seed)
      : tissue_(tissue), profile_(profile), env_(env), events_(std::move(events)), start_ms_(start_ms), seed_(seed) {
    validate(tissue_);
    validate(profile_);
    profile_.seed = mix_seed(seed_, profile_.seed);
    env_.seed = mix_seed(seed_, env_.seed);
    sort_events();
  }

  void inject(const StimulusEvent& e) {
    events_.push_back(e);
    sort_events();
  }

  std::span<const StimulusEvent> events() const { return events_; }
  TimestampMs start_ms() const { return start_ms_; }
  const TissueModel& base_tissue() const { return tissue_; }
  const BiopotentialProfile& profile() const { return profile_; }

  /// Records the channel kinds in the order they were sampled.
  void set_instrumented(bool on) {
    instrumented_ = on;
    call_log_.clear();
  }
  const std::vector<ChannelKind>& call_log() const { return call_log_; }
  void clear_call_log() { call_log_.clear(); }

  /// Electrical stimulation lowers r_parallel by 10% x intensity for vp_duration.
  TissueModel tissue_at(TimestampMs t_ms) const {
    TissueModel m = tissue_;
    const auto window = static_cast<TimestampMs>(std::llround(profile_.vp_duration_s * 1000.0));
    for (const auto& e : events_) {
      if (e.kind != StimulusKind::electrical) continue;
      if (e.time_ms <= t_ms && t_ms < e.time_ms + window) m.r_parallel *= (1.0 - 0.1 * e.intensity);
    }
    return m;
  }

  double biopotential(ChannelKind channel, TimestampMs t_ms) {
    log(channel);
    // Second electrode pair sits further from the stimulation site.
    const std::uint64_t stream = channel == ChannelKind::biopotential2 ? 2 : 1;
    if (channel == ChannelKind::biopotential2) {
      BiopotentialProfile p = profile_;
      p.ap_amplitude_v *= 0.6;
      p.vp_amplitude_v *= 0.6;
      return quantize_reading(channel, biopotential_at(p, t_ms, events_, start_ms_, stream));
    }
    return quantize_reading(channel, biopotential_at(profile_, t_ms, events_, start_ms_, stream));
  }

  fra::ResponseBuffer measure(ChannelKind channel, const fra::ExcitationWaveform& excitation, TimestampMs t_ms) {
    log(channel);
    return tissue_response(tissue_at(t_ms), excitation,
                           mix_seed(seed_, static_cast<std::uint64_t>(channel), static_cast<std::uint64_t>(t_ms)));
  }

  std::vector<std::pair<ChannelKind, double>> environment(TimestampMs t_ms) {
    auto values = environment_at(env_, t_ms, events_);
    for (const auto& [kind, v] : values) log(kind);
    return values;
  }

 private:
  void sort_events() {
    std::stable_sort(events_.begin(), events_.end(),
                     [](const StimulusEvent& a, const StimulusEvent& b) { return a.time_ms < b.time_ms; });
  }
  void log(ChannelKind k) {
    if (instrumented_) call_log_.push_back(k);
  }

  TissueModel tissue_;
  BiopotentialProfile profile_;
  EnvironmentModel env_;
  std::vector<StimulusEvent> events_;
  TimestampMs start_ms_;
  std::uint64_t seed_;
  bool instrumented_ = false;
  std::vector<ChannelKind> call_log_;
};

}  // namespace phyto::sim
