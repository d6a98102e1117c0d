#pragma once

// Autonomous acquisition/decision loop: sample in schedule order, measure
// impedance on the stimulation interval, log, push into the pipes, run the
// detector bank, evaluate bindings and dispatch actuator commands.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "phyto/actuation.hpp"
#include "phyto/config.hpp"
#include "phyto/core.hpp"
#include "phyto/detectors.hpp"
#include "phyto/fra.hpp"
#include "phyto/persistence.hpp"
#include "phyto/pipeline.hpp"
#include "phyto/tissue_sim.hpp"

namespace phyto::runtime {

namespace fs = std::filesystem;

/// 2026-01-01T00:00:00Z
inline constexpr TimestampMs kDefaultStartMs = 1'767'225'600'000;

struct ImpedanceSettings {
  double frequency_hz = 500.0;
  double amplitude_v = 0.1;
  std::size_t samples = fra::kDefaultSamplesPerBuffer;
  double transimpedance_gain = 1.0;
  bool blank_biopotentials = false;  // hold biopotentials on measurement cycles
};

struct StoreConfig {
  std::optional<fs::path> directory;
  std::uint64_t capacity_bytes = store::kDefaultCapacityBytes;
  std::uint64_t segment_bytes = store::kDefaultSegmentBytes;
  std::optional<fs::path> html_path;
  double html_every_s = 60.0;
  double html_window_s = 3600.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  double duration_s = 3600.0;
  TimestampMs start_ms = kDefaultStartMs;
  bool wall_clock = false;
  AcquisitionSchedule schedule;
  ImpedanceSettings impedance;
  sim::TissueModel tissue;
  sim::BiopotentialProfile profile;
  sim::EnvironmentModel environment;
  std::vector<sim::StimulusEvent> events;
  pipeline::Capacities pipes;
  std::vector<detect::DetectorConfig> detectors;
  bool parallel_detectors = false;
  std::vector<actuate::ActuatorConfig> actuators;
  std::vector<actuate::ActuatorBinding> bindings;
  std::optional<fra::SweepSpec> sweep;
  StoreConfig store;
  std::vector<std::string> warnings;

  std::vector<std::string> channel_names() const {
    std::vector<std::string> out;
    for (const auto& c : schedule.channel_order) out.push_back(c.name);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Configuration

inline std::vector<ChannelId> parse_channels(const std::string& text) {
  std::vector<ChannelId> out;
  for (const auto& item : config::split_list(text)) {
    const auto colon = item.find(':');
    const std::string name = colon == std::string::npos ? item : item.substr(0, colon);
    const std::string kind_text = colon == std::string::npos ? item : item.substr(colon + 1);
    const auto kind = parse_channel_kind(kind_text);
    if (!kind) throw ConfigError("unknown channel kind '" + kind_text + "'");
    out.push_back({name, *kind});
  }
  return out;
}

inline fra::SweepSpec parse_sweep(const config::FlatConfig& c) {
  fra::SweepSpec s;
  s.f_min_hz = c.number("sweep.f_min_hz", s.f_min_hz);
  s.f_max_hz = c.number("sweep.f_max_hz", s.f_max_hz);
  s.points = static_cast<std::size_t>(std::max<std::int64_t>(0, c.integer("sweep.points", std::int64_t(s.points))));
  const auto spacing = c.text("sweep.spacing", "log");
  if (spacing == "log" || spacing == "logarithmic") s.spacing = fra::Spacing::logarithmic;
  else if (spacing == "linear") s.spacing = fra::Spacing::linear;
  else throw ConfigError("sweep.spacing must be linear or log");
  s.amplitude_v = c.number("sweep.amplitude_v", s.amplitude_v);
  s.samples_per_buffer = static_cast<std::size_t>(std::max<std::int64_t>(0, c.integer("sweep.samples", std::int64_t(s.samples_per_buffer))));
  s.master_clock_hz = c.number("sweep.master_clock_hz", s.master_clock_hz);
  s.transimpedance_gain = c.number("sweep.transimpedance_gain", s.transimpedance_gain);
  fra::validate(s);
  return s;
}

/// Builds and cross-validates an experiment. Nothing is started or written.
inline ExperimentConfig parse_experiment(const config::FlatConfig& c) {
  ExperimentConfig x;
  x.seed = static_cast<std::uint64_t>(c.integer("seed", 1));
  x.duration_s = c.number("duration_s", x.duration_s);
  if (!(x.duration_s >= 0.0)) throw ConfigError("duration_s must be >= 0");
  x.start_ms = c.integer("start_ms", kDefaultStartMs);
  const auto clock = c.text("clock", "virtual");
  if (clock != "virtual" && clock != "wall") throw ConfigError("clock must be virtual or wall");
  x.wall_clock = clock == "wall";

  ScheduleConfig sc;
  sc.period_s = c.number("schedule.period_s", 1.0);
  sc.stimulation_interval_s = c.number("schedule.stimulation_interval_s", 10.0);
  sc.channels = c.has("schedule.channels") ? parse_channels(*c.text("schedule.channels")) : default_channels();
  x.schedule = build_schedule(sc);

  x.impedance.frequency_hz = c.number("impedance.frequency_hz", x.impedance.frequency_hz);
  x.impedance.amplitude_v = c.number("impedance.amplitude_v", x.impedance.amplitude_v);
  x.impedance.samples = static_cast<std::size_t>(c.integer("impedance.samples", std::int64_t(x.impedance.samples)));
  x.impedance.transimpedance_gain = c.number("impedance.transimpedance_gain", x.impedance.transimpedance_gain);
  x.impedance.blank_biopotentials = c.boolean("impedance.blank_biopotentials", false);
  if (!(x.impedance.frequency_hz >= fra::kMinFrequencyHz && x.impedance.frequency_hz <= fra::kMaxFrequencyHz)) {
    throw ConfigError("impedance.frequency_hz outside [8 Hz, 650 kHz]");
  }
  if (!(x.impedance.amplitude_v >= fra::kMinAmplitudeV && x.impedance.amplitude_v <= fra::kMaxAmplitudeV)) {
    throw ConfigError("impedance.amplitude_v outside [0.01, 1] V");
  }
  if (x.impedance.samples < 8) throw ConfigError("impedance.samples must be at least 8");

  x.tissue.r_series = c.number("tissue.r_series", x.tissue.r_series);
  x.tissue.r_parallel = c.number("tissue.r_parallel", x.tissue.r_parallel);
  x.tissue.c_parallel = c.number("tissue.c_parallel", x.tissue.c_parallel);
  x.tissue.noise_rms = c.number("tissue.noise_rms", x.tissue.noise_rms);
  sim::validate(x.tissue);

  auto& p = x.profile;
  p.baseline_v = c.number("profile.baseline_v", p.baseline_v);
  p.drift_v_per_hour = c.number("profile.drift_v_per_hour", p.drift_v_per_hour);
  p.diurnal_amplitude_v = c.number("profile.diurnal_amplitude_v", p.diurnal_amplitude_v);
  p.diurnal_period_h = c.number("profile.diurnal_period_h", p.diurnal_period_h);
  p.ap_amplitude_v = c.number("profile.ap_amplitude_v", p.ap_amplitude_v);
  p.ap_duration_s = c.number("profile.ap_duration_s", p.ap_duration_s);
  p.vp_amplitude_v = c.number("profile.vp_amplitude_v", p.vp_amplitude_v);
  p.vp_duration_s = c.number("profile.vp_duration_s", p.vp_duration_s);
  p.noise_rms_v = c.number("profile.noise_rms_v", p.noise_rms_v);
  p.seed = static_cast<std::uint64_t>(c.integer("profile.seed", std::int64_t(p.seed)));
  sim::validate(p);

  x.environment.seed = static_cast<std::uint64_t>(c.integer("environment.seed", std::int64_t(x.environment.seed)));
  x.environment.daylight_peak_lux = c.number("environment.daylight_peak_lux", x.environment.daylight_peak_lux);
  x.environment.air_temp_mean_c = c.number("environment.air_temp_mean_c", x.environment.air_temp_mean_c);

  const auto span_ms = static_cast<TimestampMs>(std::llround(x.duration_s * 1000.0));
  for (const auto& name : c.sections_under("event")) {
    const std::string key = "event." + name;
    sim::StimulusEvent e;
    const auto kind = sim::parse_stimulus_kind(c.text(key + ".kind", "touch"));
    if (!kind) throw ConfigError(key + ": unknown stimulus kind");
    e.kind = *kind;
    const double t = c.number(key + ".time_s", -1.0);
    if (!(t >= 0.0)) throw ConfigError(key + ": time_s required and >= 0");
    e.time_ms = x.start_ms + static_cast<TimestampMs>(std::llround(t * 1000.0));
    if (e.time_ms > x.start_ms + span_ms) throw ConfigError(key + ": event lies beyond the experiment duration");
    e.intensity = c.number(key + ".intensity", 1.0);
    if (!(e.intensity >= 0.0 && e.intensity <= 1.0)) throw ConfigError(key + ": intensity must lie in [0, 1]");
    x.events.push_back(e);
  }

  x.pipes.short_term = static_cast<std::size_t>(c.integer("pipe.short.capacity", 60));
  x.pipes.middle_term = static_cast<std::size_t>(c.integer("pipe.middle.capacity", 60));
  x.pipes.long_term = static_cast<std::size_t>(c.integer("pipe.long.capacity", 24));
  if (x.pipes.short_term == 0 || x.pipes.middle_term == 0 || x.pipes.long_term == 0) {
    throw ConfigError("pipe capacities must be positive");
  }

  x.parallel_detectors = c.boolean("detectors.parallel", false);
  for (const auto& id : c.sections_under("detector")) {
    const std::string key = "detector." + id;
    detect::DetectorConfig d;
    d.id = id;
    auto params = c.subtree(key);
    auto take = [&params](const std::string& k, const std::string& fallback) {
      auto it = params.find(k);
      if (it == params.end()) return fallback;
      auto v = it->second;
      params.erase(it);
      return v;
    };
    const auto kind = detect::parse_detector_kind(take("kind", ""));
    if (!kind) throw ConfigError(key + ": unknown or missing kind");
    d.kind = *kind;
    // Clock gates read no channel; they stay on unless switched off with "0".
    d.input_channel = take("channel", detect::is_clock_gate(d.kind) ? "clock" : "0");
    const auto tier = pipeline::parse_tier(take("tier", "short"));
    if (!tier) throw ConfigError(key + ": tier must be short, middle or long");
    d.tier = *tier;
    d.params = std::move(params);
    x.detectors.push_back(std::move(d));
  }

  for (const auto& id : c.sections_under("actuator")) {
    const std::string key = "actuator." + id;
    actuate::ActuatorConfig a;
    a.id = id;
    a.params = c.subtree(key);
    const auto kind = actuate::parse_actuator_kind(a.params["kind"]);
    if (!kind) throw ConfigError(key + ": unknown or missing kind");
    a.kind = *kind;
    a.params.erase("kind");
    x.actuators.push_back(std::move(a));
  }

  for (const auto& id : c.sections_under("binding")) {
    const std::string key = "binding." + id;
    actuate::ActuatorBinding b;
    b.id = id;
    b.expression_text = c.text(key + ".expression", "");
    if (b.expression_text.empty()) throw ConfigError(key + ": expression required");
    b.actuator = c.text(key + ".actuator", "");
    b.payload = c.text(key + ".payload", "");
    if (c.has(key + ".homeostat.target_rate_per_hour")) {
      b.homeostat = actuate::HomeostatConfig{c.number(key + ".homeostat.target_rate_per_hour", 1.0),
                                             c.number(key + ".homeostat.smoothing_hours", 1.0)};
    }
    x.bindings.push_back(std::move(b));
  }

  if (!c.subtree("sweep").empty()) x.sweep = parse_sweep(c);

  if (auto dir = c.text("store.directory")) x.store.directory = *dir;
  x.store.capacity_bytes = static_cast<std::uint64_t>(c.integer("store.capacity_bytes", std::int64_t(x.store.capacity_bytes)));
  x.store.segment_bytes = static_cast<std::uint64_t>(c.integer("store.segment_bytes", std::int64_t(x.store.segment_bytes)));
  if (auto html = c.text("store.html_path")) x.store.html_path = *html;
  x.store.html_every_s = c.number("store.html_every_s", x.store.html_every_s);
  x.store.html_window_s = c.number("store.html_window_s", x.store.html_window_s);

  std::set<std::string> names;
  for (const auto& ch : x.schedule.channel_order) names.insert(ch.name);
  detect::validate_detectors(x.detectors, names);
  actuate::validate_bindings(x.bindings, x.detectors, x.actuators);

  for (const auto& k : c.unused_keys()) x.warnings.push_back("unrecognized setting '" + k + "'");
  return x;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
  return parse_experiment(config::FlatConfig::from_file(path));
}

// ---------------------------------------------------------------------------
// Acquisition

/// Excitation for autonomous impedance measurements at the configured frequency.
inline fra::ExcitationWaveform stimulation_waveform(const ImpedanceSettings& s) {
  const auto p = fra::snap_frequency(s.frequency_hz, s.samples, 16e6, 16.0);
  return fra::synthesize_excitation(p.frequency_hz, s.amplitude_v, s.samples, p.sample_rate_hz);
}

/// Samples one Record per cycle from the simulator, voltage channels first,
/// then impedance, then environment.
class Acquirer {
 public:
  Acquirer(const ExperimentConfig& cfg, sim::Simulator& simulator)
      : schedule_(cfg.schedule),
        impedance_(cfg.impedance),
        sim_(simulator),
        excitation_(stimulation_waveform(cfg.impedance)),
        interval_ms_(static_cast<TimestampMs>(std::llround(cfg.schedule.stimulation_interval_s * 1000.0))) {}

  Record acquire(TimestampMs t_ms) {
    Record r;
    r.timestamp_ms = t_ms;
    r.values.reserve(schedule_.channel_order.size());
    const bool measure_now = !last_measure_ms_ || t_ms - *last_measure_ms_ >= interval_ms_;

    for (const auto& ch : schedule_.channel_order) {
      if (group_of(ch.kind) != ChannelGroup::voltage) continue;
      double v = sim_.biopotential(ch.kind, t_ms);
      if (impedance_.blank_biopotentials && measure_now && held_.contains(ch.name)) v = held_[ch.name];
      held_[ch.name] = v;
      r.values.emplace_back(ch.name, v);
    }

    for (const auto& ch : schedule_.channel_order) {
      if (group_of(ch.kind) != ChannelGroup::impedance) continue;
      if (measure_now || !held_.contains(ch.name)) {
        const auto response = sim_.measure(ch.kind, excitation_, t_ms);
        last_analysis_ = fra::analyze_pair(excitation_, response, impedance_.transimpedance_gain);
        const double v = ch.kind == ChannelKind::impedance2 ? last_analysis_->im : last_analysis_->magnitude;
        held_[ch.name] = quantize_reading(ch.kind, v);
      }
      r.values.emplace_back(ch.name, held_[ch.name]);
    }
    if (measure_now) last_measure_ms_ = t_ms;

    bool environment_sampled = false;
    std::vector<std::pair<ChannelKind, double>> env;
    for (const auto& ch : schedule_.channel_order) {
      if (group_of(ch.kind) != ChannelGroup::environment) continue;
      if (!environment_sampled) {
        env = sim_.environment(t_ms);
        environment_sampled = true;
      }
      for (const auto& [kind, v] : env) {
        if (kind == ch.kind) r.values.emplace_back(ch.name, v);
      }
    }

    // Deliver in schedule order.
    Record ordered;
    ordered.timestamp_ms = t_ms;
    for (const auto& ch : schedule_.channel_order) ordered.values.emplace_back(ch.name, *r.value(ch.name));
    return ordered;
  }

  const std::optional<fra::ImpedanceAnalysis>& last_analysis() const { return last_analysis_; }
  const fra::ExcitationWaveform& excitation() const { return excitation_; }

 private:
  AcquisitionSchedule schedule_;
  ImpedanceSettings impedance_;
  sim::Simulator& sim_;
  fra::ExcitationWaveform excitation_;
  TimestampMs interval_ms_;
  std::optional<TimestampMs> last_measure_ms_;
  std::map<std::string, double> held_;
  std::optional<fra::ImpedanceAnalysis> last_analysis_;
};

// ---------------------------------------------------------------------------
// Decision core: pipes -> detectors -> bindings (+ homeostat)

struct CycleDecision {
  detect::OutputVector vector;
  std::vector<actuate::ActuatorCommand> commands;
  pipeline::TierEvents ready;
};

class DecisionCore {
 public:
  explicit DecisionCore(const ExperimentConfig& cfg)
      : cfg_(cfg), pipes_(cfg.pipes), homeostats_(cfg.bindings.size()), adjust_(cfg.bindings.size(), 1.0) {
    for (std::size_t i = 0; i < cfg.bindings.size(); ++i) {
      if (cfg.bindings[i].homeostat) {
        homeostats_[i] = actuate::HomeostatState{cfg.bindings[i].homeostat->target_rate_per_hour, 1.0, 0.0};
      }
    }
  }

  CycleDecision process(const Record& r, std::uint64_t cycle_id) {
    CycleDecision d;
    d.ready = pipes_.push(r);
    detect::TierSnapshots snaps;
    for (auto t : d.ready.tiers()) snaps[t] = pipes_.snapshot(t);
    d.vector = detect::run_detectors(cfg_.detectors, snaps, r.timestamp_ms, cycle_id,
                                     cfg_.parallel_detectors ? detect::Execution::parallel : detect::Execution::sequential);
    d.commands = actuate::evaluate_bindings(d.vector, cfg_.bindings, cfg_.actuators, cfg_.seed, adjust_);

    for (std::size_t i = 0; i < cfg_.bindings.size(); ++i) {
      if (!homeostats_[i]) continue;
      const bool fired = std::any_of(d.commands.begin(), d.commands.end(),
                                     [&](const auto& c) { return c.binding_id == cfg_.bindings[i].id; });
      homeostats_[i] = actuate::homeostat_update(*homeostats_[i], fired, cfg_.schedule.period_s,
                                                 cfg_.bindings[i].homeostat->smoothing_hours);
      adjust_[i] = homeostats_[i]->threshold_adjust;
    }
    return d;
  }

  const pipeline::PipeSet& pipes() const { return pipes_; }
  std::optional<actuate::HomeostatState> homeostat(std::size_t binding) const { return homeostats_.at(binding); }

 private:
  const ExperimentConfig& cfg_;
  pipeline::PipeSet pipes_;
  std::vector<std::optional<actuate::HomeostatState>> homeostats_;
  std::vector<double> adjust_;
};

// ---------------------------------------------------------------------------
// Experiment

struct CycleTrace {
  std::uint64_t cycle = 0;
  Record record;
  detect::OutputVector vector;
  std::vector<actuate::ActuatorCommand> commands;
  double cost_ms = 0.0;  // wall-clock cost of the cycle
};

struct RunSummary {
  std::uint64_t cycles = 0;
  std::uint64_t records_logged = 0;
  std::vector<actuate::ActuatorCommand> commands;
  std::map<std::string, std::uint64_t> activations;  // per binding
  std::uint64_t actuator_errors = 0;
  std::vector<std::string> errors;
  double mean_cycle_ms = 0.0;
  double max_cycle_ms = 0.0;
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg)
      : cfg_(std::move(cfg)),
        sim_(cfg_.tissue, cfg_.profile, cfg_.environment, cfg_.events, cfg_.start_ms, cfg_.seed),
        acquirer_(cfg_, sim_),
        core_(cfg_),
        hub_(cfg_.actuators, [this](const sim::StimulusEvent& e) { sim_.inject(e); }) {
    if (cfg_.store.directory) {
      store_.emplace(store::LogStoreSettings{*cfg_.store.directory, cfg_.store.capacity_bytes, cfg_.store.segment_bytes},
                     cfg_.channel_names());
    }
  }

  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  std::uint64_t total_cycles() const {
    return static_cast<std::uint64_t>(std::floor(cfg_.duration_s / cfg_.schedule.period_s + 1e-9));
  }

  TimestampMs time_of(std::uint64_t cycle) const {
    return cfg_.start_ms + static_cast<TimestampMs>(cycle) * cfg_.schedule.period_ms();
  }

  bool done() const { return cycle_ >= total_cycles(); }

  CycleTrace step() {
    const auto began = std::chrono::steady_clock::now();
    CycleTrace trace;
    trace.cycle = cycle_;
    const TimestampMs t = time_of(cycle_);
    trace.record = acquirer_.acquire(t);
    if (store_) {
      store_->append(trace.record);
      ++summary_.records_logged;
    }
    remember(trace.record);
    auto decision = core_.process(trace.record, cycle_);
    trace.vector = std::move(decision.vector);
    trace.commands = std::move(decision.commands);
    for (const auto& cmd : trace.commands) {
      ++summary_.activations[cmd.binding_id];
      const auto result = hub_.dispatch(cmd);
      if (!result.ok) {
        ++summary_.actuator_errors;
        summary_.errors.push_back("cycle " + std::to_string(cycle_) + ": " + cmd.actuator_id + ": " + result.error);
      }
      summary_.commands.push_back(cmd);
    }
    maybe_emit_html(t);
    ++cycle_;
    ++summary_.cycles;
    trace.cost_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - began).count();
    cost_total_ms_ += trace.cost_ms;
    summary_.max_cycle_ms = std::max(summary_.max_cycle_ms, trace.cost_ms);
    summary_.mean_cycle_ms = cost_total_ms_ / double(summary_.cycles);
    return trace;
  }

  RunSummary run(const std::function<void(const CycleTrace&)>& observer = {}) {
    const auto wall_start = std::chrono::steady_clock::now();
    const auto period = std::chrono::microseconds(cfg_.schedule.period_ms() * 1000);
    while (!done()) {
      if (cfg_.wall_clock) std::this_thread::sleep_until(wall_start + period * cycle_);
      auto trace = step();
      if (observer) observer(trace);
    }
    if (cfg_.store.html_path) emit_html_now(time_of(cycle_ == 0 ? 0 : cycle_ - 1));
    return summary_;
  }

  const ExperimentConfig& config() const { return cfg_; }
  sim::Simulator& simulator() { return sim_; }
  const actuate::ActuatorHub& hub() const { return hub_; }
  const DecisionCore& core() const { return core_; }
  const Acquirer& acquirer() const { return acquirer_; }
  const RunSummary& summary() const { return summary_; }

 private:
  void remember(const Record& r) {
    if (!cfg_.store.html_path) return;
    recent_.push_back(r);
    const auto window_ms = static_cast<TimestampMs>(std::llround(cfg_.store.html_window_s * 1000.0));
    while (!recent_.empty() && recent_.front().timestamp_ms < r.timestamp_ms - window_ms) recent_.pop_front();
  }

  void maybe_emit_html(TimestampMs t) {
    if (!cfg_.store.html_path) return;
    const auto every_ms = static_cast<TimestampMs>(std::llround(cfg_.store.html_every_s * 1000.0));
    if (last_html_ms_ && t - *last_html_ms_ < every_ms) return;
    emit_html_now(t);
  }

  void emit_html_now(TimestampMs t) {
    std::vector<Record> window(recent_.begin(), recent_.end());
    store::emit_html(window, cfg_.channel_names(), *cfg_.store.html_path);
    last_html_ms_ = t;
  }

  ExperimentConfig cfg_;
  sim::Simulator sim_;
  Acquirer acquirer_;
  DecisionCore core_;
  actuate::ActuatorHub hub_;
  std::optional<store::LogStore> store_;
  std::deque<Record> recent_;
  std::optional<TimestampMs> last_html_ms_;
  std::uint64_t cycle_ = 0;
  RunSummary summary_;
  double cost_total_ms_ = 0.0;
};

inline RunSummary run_experiment(ExperimentConfig cfg, const std::function<void(const CycleTrace&)>& observer = {}) {
  Experiment x(std::move(cfg));
  return x.run(observer);
}

// ---------------------------------------------------------------------------
// Other commands

/// EIS sweep of the configured tissue through the simulator.
inline fra::SweepResult run_sweep_command(const ExperimentConfig& cfg) {
  if (!cfg.sweep) throw ConfigError("config has no [sweep] section");
  const auto model = cfg.tissue;
  std::uint64_t call = 0;
  const std::uint64_t seed = cfg.seed;
  return fra::run_sweep(*cfg.sweep, [&](const fra::ExcitationWaveform& w) {
    return sim::tissue_response(model, w, mix_seed(seed, ++call));
  });
}

/// Writes the simulated record stream of a scenario as one CSV file.
inline std::uint64_t simulate_scenario(const ExperimentConfig& cfg, const fs::path& out_path) {
  sim::Simulator simulator(cfg.tissue, cfg.profile, cfg.environment, cfg.events, cfg.start_ms, cfg.seed);
  Acquirer acq(cfg, simulator);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::trunc | std::ios::binary);
  if (!out) throw store::StoreError("cannot write " + out_path.string());
  out << store::csv_header(cfg.channel_names()) << '\n';
  const auto cycles = static_cast<std::uint64_t>(std::floor(cfg.duration_s / cfg.schedule.period_s + 1e-9));
  for (std::uint64_t i = 0; i < cycles; ++i) {
    out << store::format_line(acq.acquire(cfg.start_ms + TimestampMs(i) * cfg.schedule.period_ms())) << '\n';
  }
  if (!out) throw store::StoreError("write failed for " + out_path.string());
  return cycles;
}

struct ReplayResult {
  std::vector<detect::OutputVector> vectors;
  std::vector<actuate::ActuatorCommand> commands;
};

/// Feeds recorded records through the configured detectors and bindings.
/// Commands are reported, not dispatched.
inline ReplayResult replay_log(const ExperimentConfig& cfg, const store::LoadedLog& log, double speed_factor = INFINITY,
                               const std::function<void(const CycleDecision&)>& observer = {}) {
  std::set<std::string> available(log.schema.begin(), log.schema.end());
  for (const auto& d : cfg.detectors) {
    if (d.enabled() && !detect::is_clock_gate(d.kind) && !available.contains(d.input_channel)) {
      throw ConfigError("detector " + d.id + ": channel '" + d.input_channel + "' is not in the log");
    }
  }
  DecisionCore core(cfg);
  ReplayResult out;
  std::uint64_t cycle = 0;
  store::replay(log.records, speed_factor, [&](const Record& r) {
    auto d = core.process(r, cycle++);
    if (observer) observer(d);
    out.vectors.push_back(d.vector);
    out.commands.insert(out.commands.end(), d.commands.begin(), d.commands.end());
  });
  return out;
}

}  // namespace phyto::runtime
