#pragma once

// Impedance estimators over period-stable sample buffers: single-point DFT,
// magnitude/phase, RMS resistivity, lock-in correlation and phase, sweeps and
// scope-mode harmonic analysis.

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "phyto/core.hpp"
#include "phyto/format.hpp"

namespace phyto::fra {

inline constexpr double kMinFrequencyHz = 8.0;
inline constexpr double kMaxFrequencyHz = 6.5e5;
inline constexpr double kMinAmplitudeV = 0.01;
inline constexpr double kMaxAmplitudeV = 1.0;
inline constexpr std::size_t kDefaultSamplesPerBuffer = 1024;

/// Raised when the response carries no signal (zero current).
class OpenCircuitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExcitationWaveform {
  double frequency_hz = 0.0;
  double amplitude_v = 0.0;
  double sample_rate_hz = 0.0;
  std::vector<double> samples;
};

struct ResponseBuffer {
  double frequency_hz = 0.0;
  double sample_rate_hz = 0.0;
  std::vector<double> samples;
};

struct ComplexResponse {
  double re = 0.0;
  double im = 0.0;

  std::complex<double> value() const { return {re, im}; }
};

struct MagnitudePhase {
  double magnitude = 0.0;
  std::optional<double> phase_deg;  // empty for the zero vector
};

struct ImpedanceAnalysis {
  double frequency_hz = 0.0;
  double re = 0.0;  // Re of V_V/V_I (times transimpedance gain)
  double im = 0.0;
  double magnitude = 0.0;
  double phase_deg = 0.0;
  double vi_rms = 0.0;
  double vv_rms = 0.0;
  double m_rms = 0.0;
  double correlation = 0.0;
  double p_c_deg = 0.0;
  double gamma = 0.0;
  std::vector<std::string> warnings;
};

/// Number of whole cycles of `frequency_hz` in `n` samples, if integral.
inline std::optional<std::size_t> period_stable_cycles(double frequency_hz, std::size_t n,
                                                       double sample_rate_hz) {
  if (!(frequency_hz > 0.0) || !(sample_rate_hz > 0.0) || n == 0) return std::nullopt;
  const double cycles = frequency_hz * static_cast<double>(n) / sample_rate_hz;
  const double whole = std::round(cycles);
  if (whole < 1.0 || std::abs(cycles - whole) > 1e-9 * std::max(1.0, whole)) return std::nullopt;
  return static_cast<std::size_t>(whole);
}

inline ExcitationWaveform synthesize_excitation(double frequency_hz, double amplitude_v, std::size_t n,
                                                double sample_rate_hz) {
  if (!(frequency_hz >= kMinFrequencyHz && frequency_hz <= kMaxFrequencyHz)) {
    throw InputError("excitation: frequency outside [8 Hz, 650 kHz]");
  }
  if (!(amplitude_v >= kMinAmplitudeV && amplitude_v <= kMaxAmplitudeV)) {
    throw InputError("excitation: amplitude outside [0.01, 1] V");
  }
  if (n < 2) throw InputError("excitation: need at least two samples");
  if (!(frequency_hz < sample_rate_hz / 2.0)) throw InputError("excitation: frequency at or above Nyquist");
  const auto cycles = period_stable_cycles(frequency_hz, n, sample_rate_hz);
  if (!cycles) {
    throw InputError("excitation: not period-stable (" +
                     format_double(frequency_hz * double(n) / sample_rate_hz) + " cycles per buffer)");
  }

  ExcitationWaveform w{frequency_hz, amplitude_v, sample_rate_hz, std::vector<double>(n)};
  const std::size_t c = *cycles;
  for (std::size_t k = 0; k < n; ++k) {
    // (c*k mod n) keeps the phase argument exact for long buffers.
    const double phase = 2.0 * std::numbers::pi * static_cast<double>((c * k) % n) / static_cast<double>(n);
    w.samples[k] = amplitude_v * std::sin(phase);
  }
  return w;
}

/// Single-point DFT at `cycles` cycles per buffer, scaled by 1/N.
inline ComplexResponse fra_single_point(std::span<const double> buffer, std::size_t cycles) {
  const std::size_t n = buffer.size();
  if (n == 0) throw InputError("fra: empty buffer");
  if (n < 2) throw InputError("fra: need at least two samples");
  if (cycles < 1 || 2 * cycles >= n) throw InputError("fra: cycles per buffer must lie in [1, N/2)");

  double re = 0.0;
  double im = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>((cycles * k) % n) / static_cast<double>(n);
    re += buffer[k] * std::cos(angle);
    im -= buffer[k] * std::sin(angle);
  }
  return {re / static_cast<double>(n), im / static_cast<double>(n)};
}

inline double phase_degrees(double re, double im) {
  double deg = std::atan2(im, re) * 180.0 / std::numbers::pi;
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

inline MagnitudePhase magnitude_phase(const ComplexResponse& c) {
  MagnitudePhase out;
  out.magnitude = std::hypot(c.re, c.im);
  if (c.re != 0.0 || c.im != 0.0) out.phase_deg = phase_degrees(c.re, c.im);
  return out;
}

inline double rms(std::span<const double> samples) {
  if (samples.empty()) throw InputError("rms: empty buffer");
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

inline double rms_resistivity(double vv_rms, double vi_rms) {
  if (vi_rms == 0.0) throw OpenCircuitError("rms resistivity: zero response RMS (open circuit)");
  if (vi_rms < 0.0 || vv_rms < 0.0) throw InputError("rms resistivity: negative RMS value");
  return vv_rms / vi_rms;
}

inline double lockin_correlation(std::span<const double> vi, std::span<const double> vv) {
  if (vi.size() != vv.size()) throw InputError("lock-in correlation: buffer length mismatch");
  if (vi.empty()) throw InputError("lock-in correlation: empty buffers");
  double acc = 0.0;
  for (std::size_t k = 0; k < vi.size(); ++k) acc += vi[k] * vv[k];
  return acc / static_cast<double>(vi.size());
}

struct LockinPhase {
  double p_c_deg = 0.0;
  double gamma = 0.0;
  double clamp_excess = 0.0;  // |gamma*C| beyond 1 absorbed by the clamp
};

inline constexpr double kClampWarningExcess = 1e-9;

inline LockinPhase lockin_phase(double correlation, double vi_rms, double vv_rms) {
  if (!(vi_rms > 0.0) || !(vv_rms > 0.0)) throw InputError("lock-in phase: RMS values must be positive");
  LockinPhase out;
  out.gamma = 1.0 / (vi_rms * vv_rms);
  const double normalized = out.gamma * correlation;
  out.clamp_excess = std::max(0.0, std::abs(normalized) - 1.0);
  out.p_c_deg = std::acos(std::clamp(normalized, -1.0, 1.0)) * 180.0 / std::numbers::pi;
  return out;
}

/// Full parameter set for one excitation/response pair. The complex result is
/// the differential ratio FRA(V_V)/FRA(V_I) scaled by the transimpedance gain,
/// i.e. the impedance seen by the excitation.
inline ImpedanceAnalysis analyze_pair(const ExcitationWaveform& vv, const ResponseBuffer& vi,
                                      double transimpedance_gain = 1.0) {
  if (vv.samples.size() != vi.samples.size()) throw InputError("analyze: buffer length mismatch");
  if (vv.sample_rate_hz != vi.sample_rate_hz || vv.frequency_hz != vi.frequency_hz) {
    throw InputError("analyze: excitation and response disagree on frequency or rate");
  }
  if (!(transimpedance_gain > 0.0)) throw InputError("analyze: transimpedance gain must be positive");
  const auto cycles = period_stable_cycles(vv.frequency_hz, vv.samples.size(), vv.sample_rate_hz);
  if (!cycles) throw InputError("analyze: buffers are not period-stable");

  ImpedanceAnalysis a;
  a.frequency_hz = vv.frequency_hz;

  const auto fv = fra_single_point(vv.samples, *cycles);
  const auto fi = fra_single_point(vi.samples, *cycles);
  if (fi.re == 0.0 && fi.im == 0.0) throw OpenCircuitError("analyze: no response at excitation frequency");
  const std::complex<double> z = fv.value() / fi.value() * transimpedance_gain;
  a.re = z.real();
  a.im = z.imag();
  const auto mp = magnitude_phase({a.re, a.im});
  a.magnitude = mp.magnitude;
  a.phase_deg = mp.phase_deg.value_or(0.0);

  a.vi_rms = rms(vi.samples);
  a.vv_rms = rms(vv.samples);
  a.m_rms = rms_resistivity(a.vv_rms, a.vi_rms) * transimpedance_gain;
  a.correlation = lockin_correlation(vi.samples, vv.samples);
  const auto lp = lockin_phase(a.correlation, a.vi_rms, a.vv_rms);
  a.p_c_deg = lp.p_c_deg;
  a.gamma = lp.gamma;
  if (lp.clamp_excess > kClampWarningExcess) {
    a.warnings.push_back("lock-in: normalized correlation exceeded unity by " + format_double(lp.clamp_excess));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class Spacing { linear, logarithmic };

struct SweepSpec {
  double f_min_hz = kMinFrequencyHz;
  double f_max_hz = 3e5;
  std::size_t points = 20;
  Spacing spacing = Spacing::logarithmic;
  double amplitude_v = 0.1;
  std::size_t samples_per_buffer = kDefaultSamplesPerBuffer;
  double master_clock_hz = 16e6;        // sample rate = master clock / integer divider
  double samples_per_cycle_target = 16.0;
  double transimpedance_gain = 1.0;
};

struct SweepPoint {
  double requested_hz = 0.0;
  double frequency_hz = 0.0;  // snapped, period-stable
  double sample_rate_hz = 0.0;
  std::size_t cycles = 0;
  double snap_error = 0.0;  // relative, (snapped - requested) / requested
};

inline void validate(const SweepSpec& spec) {
  auto in_band = [](double f) { return f >= kMinFrequencyHz && f <= kMaxFrequencyHz; };
  if (!in_band(spec.f_min_hz) || !in_band(spec.f_max_hz)) {
    throw ConfigError("sweep: frequencies must lie within [8 Hz, 650 kHz]");
  }
  if (!(spec.f_min_hz < spec.f_max_hz)) throw ConfigError("sweep: f_min must be below f_max");
  if (spec.points < 2) throw ConfigError("sweep: need at least two points");
  if (spec.samples_per_buffer < 8) throw ConfigError("sweep: samples per buffer must be at least 8");
  if (!(spec.amplitude_v >= kMinAmplitudeV && spec.amplitude_v <= kMaxAmplitudeV)) {
    throw ConfigError("sweep: amplitude outside [0.01, 1] V");
  }
  if (!(spec.master_clock_hz > 2.0 * kMaxFrequencyHz)) throw ConfigError("sweep: master clock too slow");
  if (!(spec.samples_per_cycle_target > 2.0)) throw ConfigError("sweep: samples per cycle must exceed 2");
  if (!(spec.transimpedance_gain > 0.0)) throw ConfigError("sweep: transimpedance gain must be positive");
}

/// Picks a sample rate (master clock / integer divider) near the target
/// oversampling and moves `requested_hz` to the nearest whole number of
/// cycles per buffer.
inline SweepPoint snap_frequency(double requested_hz, std::size_t n, double master_clock_hz,
                                 double samples_per_cycle_target) {
  SweepPoint p;
  p.requested_hz = requested_hz;
  const double divider = std::max(1.0, std::floor(master_clock_hz / (requested_hz * samples_per_cycle_target)));
  p.sample_rate_hz = master_clock_hz / divider;
  const double nd = static_cast<double>(n);
  auto cycles = static_cast<std::size_t>(std::max(1.0, std::round(requested_hz * nd / p.sample_rate_hz)));
  cycles = std::min(cycles, (n - 1) / 2);
  auto freq_of = [&](std::size_t c) { return static_cast<double>(c) * p.sample_rate_hz / nd; };
  while (freq_of(cycles) > kMaxFrequencyHz && cycles > 1) --cycles;
  while (freq_of(cycles) < kMinFrequencyHz && 2 * (cycles + 1) < n) ++cycles;
  p.cycles = cycles;
  p.frequency_hz = freq_of(cycles);
  p.snap_error = (p.frequency_hz - requested_hz) / requested_hz;
  return p;
}

inline std::vector<SweepPoint> plan_sweep(const SweepSpec& spec) {
  validate(spec);
  std::vector<SweepPoint> plan;
  plan.reserve(spec.points);
  const double last = static_cast<double>(spec.points - 1);
  for (std::size_t i = 0; i < spec.points; ++i) {
    const double t = static_cast<double>(i) / last;
    double f = spec.spacing == Spacing::linear
                   ? spec.f_min_hz + t * (spec.f_max_hz - spec.f_min_hz)
                   : spec.f_min_hz * std::pow(spec.f_max_hz / spec.f_min_hz, t);
    if (i == 0) f = spec.f_min_hz;
    if (i + 1 == spec.points) f = spec.f_max_hz;
    plan.push_back(snap_frequency(f, spec.samples_per_buffer, spec.master_clock_hz, spec.samples_per_cycle_target));
  }
  return plan;
}

/// Produces the response buffer for a given excitation (hardware or simulator).
using ResponseSource = std::function<ResponseBuffer(const ExcitationWaveform&)>;

struct SweepResult {
  std::vector<SweepPoint> plan;
  std::vector<ImpedanceAnalysis> points;
  std::optional<std::string> error;  // set when the source failed part-way

  bool complete() const { return !error && points.size() == plan.size(); }
};

inline SweepResult run_sweep(const SweepSpec& spec, const ResponseSource& source) {
  SweepResult result;
  result.plan = plan_sweep(spec);
  for (const auto& p : result.plan) {
    try {
      const auto vv = synthesize_excitation(p.frequency_hz, spec.amplitude_v, spec.samples_per_buffer, p.sample_rate_hz);
      const auto vi = source(vv);
      result.points.push_back(analyze_pair(vv, vi, spec.transimpedance_gain));
    } catch (const std::exception& e) {
      result.error = "sweep stopped at " + format_double(p.frequency_hz) + " Hz: " + e.what();
      break;
    }
  }
  return result;
}

inline constexpr std::string_view kSweepCsvHeader = "frequency_hz,re,im,magnitude,phase_deg,vi_rms,vv_rms,m_rms,c,p_c";

inline void write_sweep_csv(std::ostream& out, std::span<const ImpedanceAnalysis> points) {
  out << kSweepCsvHeader << '\n';
  for (const auto& a : points) {
    out << format_double(a.frequency_hz) << ',' << format_double(a.re) << ',' << format_double(a.im) << ','
        << format_double(a.magnitude) << ',' << format_double(a.phase_deg) << ',' << format_double(a.vi_rms) << ','
        << format_double(a.vv_rms) << ',' << format_double(a.m_rms) << ',' << format_double(a.correlation) << ','
        << format_double(a.p_c_deg) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Scope mode

struct Harmonic {
  std::size_t index = 0;
  double magnitude = 0.0;  // peak amplitude of that harmonic
};

struct ScopeSpectrum {
  std::vector<Harmonic> harmonics;
  bool truncated = false;
  std::vector<std::string> warnings;

  double ratio(std::size_t index) const {
    if (harmonics.empty() || harmonics.front().magnitude == 0.0) return 0.0;
    for (const auto& h : harmonics) {
      if (h.index == index) return h.magnitude / harmonics.front().magnitude;
    }
    return 0.0;
  }

  /// Total harmonic distortion: RMS of harmonics 2..H over the fundamental.
  double thd() const {
    if (harmonics.empty() || harmonics.front().magnitude == 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 1; i < harmonics.size(); ++i) acc += harmonics[i].magnitude * harmonics[i].magnitude;
    return std::sqrt(acc) / harmonics.front().magnitude;
  }
};

inline ScopeSpectrum scope_spectrum(std::span<const double> buffer, std::size_t fundamental_cycles,
                                    std::size_t max_harmonic) {
  if (buffer.size() < 2) throw InputError("scope: buffer too short");
  if (fundamental_cycles < 1 || 2 * fundamental_cycles >= buffer.size()) {
    throw InputError("scope: fundamental must lie below Nyquist");
  }
  if (max_harmonic < 1) throw InputError("scope: need at least the fundamental");
  ScopeSpectrum s;
  for (std::size_t h = 1; h <= max_harmonic; ++h) {
    const std::size_t c = h * fundamental_cycles;
    if (2 * c >= buffer.size()) {
      s.truncated = true;
      s.warnings.push_back("scope: harmonics from " + std::to_string(h) + " lie at or beyond Nyquist; truncated");
      break;
    }
    const auto bin = fra_single_point(buffer, c);
    s.harmonics.push_back({h, 2.0 * std::hypot(bin.re, bin.im)});
  }
  return s;
}

}  // namespace phyto::fra
