#pragma once

// Detector -> actuator coupling: binding evaluation over the output vector,
// homeostatic threshold adaptation and dispatch to actuator sinks.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "phyto/detectors.hpp"
#include "phyto/expression.hpp"
#include "phyto/format.hpp"
#include "phyto/net.hpp"
#include "phyto/random.hpp"
#include "phyto/tissue_sim.hpp"

namespace phyto::actuate {

enum class ActuatorKind { rgb_led, relay, electrical_stimulation, message_to_file, message_to_ip, generic_sink };

inline constexpr std::string_view to_string(ActuatorKind k) {
  switch (k) {
    case ActuatorKind::rgb_led: return "rgb_led";
    case ActuatorKind::relay: return "relay";
    case ActuatorKind::electrical_stimulation: return "electrical_stimulation";
    case ActuatorKind::message_to_file: return "message_to_file";
    case ActuatorKind::message_to_ip: return "message_to_ip";
    case ActuatorKind::generic_sink: return "generic_sink";
  }
  return "unknown";
}

inline std::optional<ActuatorKind> parse_actuator_kind(std::string_view s) {
  for (auto k : {ActuatorKind::rgb_led, ActuatorKind::relay, ActuatorKind::electrical_stimulation,
                 ActuatorKind::message_to_file, ActuatorKind::message_to_ip, ActuatorKind::generic_sink}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct ActuatorConfig {
  std::string id;
  ActuatorKind kind = ActuatorKind::generic_sink;
  std::map<std::string, std::string> params;

  std::string text(const std::string& key, const std::string& fallback = {}) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

struct HomeostatConfig {
  double target_rate_per_hour = 1.0;
  double smoothing_hours = 1.0;
};

struct ActuatorBinding {
  std::string id;
  std::string expression_text;
  ExprPtr expression;
  std::string actuator;
  std::string payload;
  std::optional<HomeostatConfig> homeostat;
};

struct ActuatorCommand {
  std::uint64_t cycle_id = 0;
  TimestampMs timestamp_ms = 0;
  std::string binding_id;
  std::string actuator_id;
  ActuatorKind kind = ActuatorKind::generic_sink;
  std::string payload;

  friend bool operator==(const ActuatorCommand&, const ActuatorCommand&) = default;
};

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline bool compare(double lhs, Compare op, double rhs) {
  switch (op) {
    case Compare::eq: return lhs == rhs;
    case Compare::ne: return lhs != rhs;
    case Compare::lt: return lhs < rhs;
    case Compare::le: return lhs <= rhs;
    case Compare::gt: return lhs > rhs;
    case Compare::ge: return lhs >= rhs;
  }
  return false;
}

struct EvalContext {
  const detect::OutputVector& vector;
  double threshold_adjust = 1.0;
  std::uint64_t bernoulli_seed = 0;
  bool blocked = false;  // touched a not-executed entry without testing for it
};

inline bool eval(const Expr& e, EvalContext& ctx) {
  return std::visit(
      [&ctx](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          const auto* entry = ctx.vector.find(n.detector);
          if (!entry || !entry->executed) {
            const bool explicit_zero_test = n.literal == 0.0 && (n.op == Compare::eq || n.op == Compare::ne);
            if (!explicit_zero_test) {
              ctx.blocked = true;
              return false;
            }
            return compare(0.0, n.op, 0.0);
          }
          const double literal = entry->numeric ? n.literal * ctx.threshold_adjust : n.literal;
          return compare(entry->value, n.op, literal);
        } else if constexpr (std::is_same_v<T, Bernoulli>) {
          SplitMix64 g(mix_seed(ctx.bernoulli_seed, n.leaf));
          return g.uniform() <= n.p && n.p > 0.0;
        } else if constexpr (std::is_same_v<T, Not>) {
          return !eval(*n.operand, ctx);
        } else if constexpr (std::is_same_v<T, And>) {
          bool all = true;
          for (const auto& op : n.operands) all = eval(*op, ctx) && all;
          return all;
        } else {
          bool any = false;
          for (const auto& op : n.operands) any = eval(*op, ctx) || any;
          return any;
        }
      },
      e.node);
}

inline constexpr std::size_t kMaxQuietCheckLeaves = 16;

inline std::size_t count_bernoulli(const Expr& e) {
  return std::visit(
      [](const auto& n) -> std::size_t {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Bernoulli>) {
          return 1;
        } else if constexpr (std::is_same_v<T, Not>) {
          return count_bernoulli(*n.operand);
        } else if constexpr (std::is_same_v<T, And> || std::is_same_v<T, Or>) {
          std::size_t c = 0;
          for (const auto& op : n.operands) c += count_bernoulli(*op);
          return c;
        } else {
          return 0;
        }
      },
      e.node);
}

/// True if some vector without a single true condition makes `e` fire: every
/// referenced verdict detector is -1 or not executed, every numeric detector
/// is not executed or fails every comparison, BERNOULLI draws go either way.
inline bool can_fire_spontaneously(const Expr& e, const std::map<std::string, bool>& numeric) {
  std::set<std::string> refs;
  collect_detectors(e, refs);
  const std::size_t draws = count_bernoulli(e);
  if (refs.size() + draws > kMaxQuietCheckLeaves) {
    throw ConfigError("expression has more than " + std::to_string(kMaxQuietCheckLeaves) +
                      " distinct detectors plus BERNOULLI terms");
  }
  const std::vector<std::string> ids(refs.begin(), refs.end());
  for (std::uint32_t mask = 0; mask < (1u << (ids.size() + draws)); ++mask) {
    std::map<std::string, bool> executed;
    for (std::size_t i = 0; i < ids.size(); ++i) executed[ids[i]] = (mask >> i) & 1u;
    std::size_t draw = ids.size();
    bool blocked = false;
    auto eval_quiet = [&](auto&& self, const Expr& x) -> bool {
      return std::visit(
          [&](const auto& n) -> bool {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Comparison>) {
              if (!executed.at(n.detector)) {
                if (n.literal == 0.0 && (n.op == Compare::eq || n.op == Compare::ne)) return n.op == Compare::eq;
                blocked = true;
                return false;
              }
              if (numeric.at(n.detector)) return false;
              return compare(-1.0, n.op, n.literal);
            } else if constexpr (std::is_same_v<T, Bernoulli>) {
              return (mask >> draw++) & 1u;
            } else if constexpr (std::is_same_v<T, Not>) {
              return !self(self, *n.operand);
            } else if constexpr (std::is_same_v<T, And>) {
              bool all = true;
              for (const auto& op : n.operands) all = self(self, *op) && all;
              return all;
            } else {
              bool any = false;
              for (const auto& op : n.operands) any = self(self, *op) || any;
              return any;
            }
          },
          x.node);
    };
    if (eval_quiet(eval_quiet, e) && !blocked) return true;
  }
  return false;
}

}  // namespace detail

/// True when the binding's expression holds for this vector. Entries that
/// were not executed veto the expression unless compared against 0.
inline bool binding_fires(const ActuatorBinding& b, const detect::OutputVector& v, std::uint64_t bernoulli_seed,
                          double threshold_adjust = 1.0) {
  detail::EvalContext ctx{v, threshold_adjust, bernoulli_seed};
  const bool result = detail::eval(*b.expression, ctx);
  return result && !ctx.blocked;
}

/// Startup validation: parses expressions, resolves detector and actuator
/// references and rejects bindings that could fire with no detector true.
inline void validate_bindings(std::vector<ActuatorBinding>& bindings, std::span<const detect::DetectorConfig> detectors,
                              std::span<const ActuatorConfig> actuators) {
  std::map<std::string, bool> numeric;
  for (const auto& d : detectors) numeric[d.id] = detect::is_numeric(d.kind);
  std::set<std::string> actuator_ids;
  for (const auto& a : actuators) {
    if (!actuator_ids.insert(a.id).second) throw ConfigError("duplicate actuator id '" + a.id + "'");
  }
  std::set<std::string> seen;
  for (auto& b : bindings) {
    if (!seen.insert(b.id).second) throw ConfigError("duplicate binding id '" + b.id + "'");
    if (!b.expression) b.expression = parse_expression(b.expression_text);
    std::set<std::string> refs;
    collect_detectors(*b.expression, refs);
    if (refs.empty()) throw ConfigError("binding " + b.id + ": expression references no detector");
    for (const auto& r : refs) {
      if (!numeric.contains(r)) throw ConfigError("binding " + b.id + ": unknown detector '" + r + "'");
    }
    if (!actuator_ids.contains(b.actuator)) throw ConfigError("binding " + b.id + ": unknown actuator '" + b.actuator + "'");
    if (detail::can_fire_spontaneously(*b.expression, numeric)) {
      throw ConfigError("binding " + b.id + ": expression can fire while no detector condition holds");
    }
    if (b.homeostat && (!(b.homeostat->target_rate_per_hour > 0.0) || !(b.homeostat->smoothing_hours > 0.0))) {
      throw ConfigError("binding " + b.id + ": homeostat needs positive target rate and smoothing");
    }
  }
}

/// One command per firing binding, in declaration order.
inline std::vector<ActuatorCommand> evaluate_bindings(const detect::OutputVector& vector,
                                                      std::span<const ActuatorBinding> bindings,
                                                      std::span<const ActuatorConfig> actuators, std::uint64_t seed,
                                                      std::span<const double> threshold_adjust = {}) {
  std::vector<ActuatorCommand> out;
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    const auto& b = bindings[i];
    const double adjust = i < threshold_adjust.size() ? threshold_adjust[i] : 1.0;
    if (!binding_fires(b, vector, mix_seed(seed, vector.cycle_id, i), adjust)) continue;
    auto kind = ActuatorKind::generic_sink;
    for (const auto& a : actuators) {
      if (a.id == b.actuator) kind = a.kind;
    }
    out.push_back({vector.cycle_id, vector.clock_ms, b.id, b.actuator, kind, b.payload});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Homeostat

inline constexpr double kAdjustFloor = 0.1;
inline constexpr double kAdjustCap = 10.0;
inline constexpr double kAdjustStep = 1.05;

struct HomeostatState {
  double target_rate_per_hour = 1.0;
  double threshold_adjust = 1.0;
  double observed_rate_per_hour = 0.0;
};

/// Multiplicative increase/decrease of the threshold factor driven by the
/// current rate estimate, then exponential smoothing of the rate with the
/// activity of the step just taken.
inline HomeostatState homeostat_update(HomeostatState s, bool fired, double dt_s, double smoothing_hours = 1.0) {
  if (!(dt_s > 0.0)) throw InputError("homeostat: dt must be positive");
  if (s.observed_rate_per_hour > s.target_rate_per_hour) {
    s.threshold_adjust *= kAdjustStep;
  } else if (s.observed_rate_per_hour < s.target_rate_per_hour) {
    s.threshold_adjust /= kAdjustStep;
  }
  s.threshold_adjust = std::clamp(s.threshold_adjust, kAdjustFloor, kAdjustCap);
  const double dt_h = dt_s / 3600.0;
  const double alpha = 1.0 - std::exp(-dt_h / smoothing_hours);
  const double instant = fired ? 1.0 / dt_h : 0.0;
  s.observed_rate_per_hour += alpha * (instant - s.observed_rate_per_hour);
  return s;
}

// ---------------------------------------------------------------------------
// Dispatch

struct RgbState {
  bool r = false;
  bool g = false;
  bool b = false;

  friend bool operator==(const RgbState&, const RgbState&) = default;
};

struct DispatchResult {
  bool ok = true;
  std::string error;
};

/// Owns device-state registers and outbound sinks. Not thread-safe: all
/// dispatch happens on the loop thread.
class ActuatorHub {
 public:
  using StimulationSink = std::function<void(const sim::StimulusEvent&)>;

  explicit ActuatorHub(std::vector<ActuatorConfig> actuators, StimulationSink stimulate = {})
      : actuators_(std::move(actuators)), stimulate_(std::move(stimulate)) {
    for (const auto& a : actuators_) {
      if (a.kind == ActuatorKind::message_to_file && a.text("path").empty()) {
        throw ConfigError("actuator " + a.id + ": message_to_file needs a path");
      }
      if (a.kind == ActuatorKind::message_to_ip) {
        if (a.text("host").empty()) throw ConfigError("actuator " + a.id + ": message_to_ip needs a host");
        auto port = parse_int(a.text("port"));
        if (!port || *port <= 0 || *port > 65535) throw ConfigError("actuator " + a.id + ": invalid port");
        if (!net::parse_transport(a.text("transport", "udp"))) {
          throw ConfigError("actuator " + a.id + ": transport must be tcp or udp");
        }
      }
      if (a.kind == ActuatorKind::rgb_led) rgb_[a.id] = {};
      if (a.kind == ActuatorKind::relay) relay_[a.id] = false;
    }
  }

  void set_stimulation_sink(StimulationSink sink) { stimulate_ = std::move(sink); }

  DispatchResult dispatch(const ActuatorCommand& cmd) {
    const ActuatorConfig* a = find(cmd.actuator_id);
    if (!a) return fail(cmd.actuator_id, "unknown actuator");
    if (disabled_.contains(a->id)) return fail(a->id, "actuator disabled after fatal error");
    switch (a->kind) {
      case ActuatorKind::rgb_led: return set_rgb(*a, cmd.payload);
      case ActuatorKind::relay: return set_relay(*a, cmd.payload);
      case ActuatorKind::electrical_stimulation: return stimulate(*a, cmd);
      case ActuatorKind::message_to_file: return write_file(*a, cmd);
      case ActuatorKind::message_to_ip: return send_ip(*a, cmd);
      case ActuatorKind::generic_sink:
        sink_log_.push_back(iso8601_utc(cmd.timestamp_ms) + "\t" + a->id + "\t" + cmd.binding_id + "\t" + cmd.payload);
        return {};
    }
    return fail(a->id, "unsupported actuator kind");
  }

  RgbState rgb(const std::string& id) const { return rgb_.at(id); }
  bool relay(const std::string& id) const { return relay_.at(id); }
  const std::vector<std::string>& sink_log() const { return sink_log_; }
  const std::vector<std::string>& error_log() const { return error_log_; }
  std::size_t error_count() const { return error_log_.size(); }
  std::size_t error_count(const std::string& id) const {
    auto it = errors_.find(id);
    return it == errors_.end() ? 0 : it->second;
  }
  std::size_t dropped_messages() const { return dropped_; }

 private:
  const ActuatorConfig* find(const std::string& id) const {
    for (const auto& a : actuators_) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }

  DispatchResult fail(const std::string& id, std::string what) {
    ++errors_[id];
    error_log_.push_back(id + ": " + what);
    return {false, std::move(what)};
  }

  DispatchResult set_rgb(const ActuatorConfig& a, const std::string& payload) {
    // "R=1,G=0" style; unspecified components keep their state.
    RgbState s = rgb_[a.id];
    std::size_t pos = 0;
    while (pos < payload.size()) {
      auto end = payload.find(',', pos);
      if (end == std::string::npos) end = payload.size();
      std::string item = payload.substr(pos, end - pos);
      pos = end + 1;
      std::erase(item, ' ');
      const auto eq = item.find('=');
      if (eq != 1) return fail(a.id, "bad rgb payload '" + payload + "'");
      const char comp = static_cast<char>(std::toupper(static_cast<unsigned char>(item[0])));
      const std::string val = item.substr(eq + 1);
      bool on = false;
      if (val == "1" || val == "on") on = true;
      else if (val == "0" || val == "off") on = false;
      else return fail(a.id, "bad rgb value '" + val + "'");
      if (comp == 'R') s.r = on;
      else if (comp == 'G') s.g = on;
      else if (comp == 'B') s.b = on;
      else return fail(a.id, "bad rgb component in '" + item + "'");
    }
    rgb_[a.id] = s;
    return {};
  }

  DispatchResult set_relay(const ActuatorConfig& a, const std::string& payload) {
    if (payload == "on" || payload == "1") relay_[a.id] = true;
    else if (payload == "off" || payload == "0") relay_[a.id] = false;
    else if (payload == "toggle") relay_[a.id] = !relay_[a.id];
    else return fail(a.id, "bad relay payload '" + payload + "'");
    return {};
  }

  DispatchResult stimulate(const ActuatorConfig& a, const ActuatorCommand& cmd) {
    double intensity = parse_double(a.text("intensity", "1")).value_or(1.0);
    if (auto p = parse_double(cmd.payload)) intensity = *p;
    intensity = std::clamp(intensity, 0.0, 1.0);
    if (!stimulate_) return fail(a.id, "no stimulation target connected");
    stimulate_({sim::StimulusKind::electrical, cmd.timestamp_ms, intensity});
    return {};
  }

  DispatchResult write_file(const ActuatorConfig& a, const ActuatorCommand& cmd) {
    std::ofstream out(a.text("path"), std::ios::app);
    if (out) out << iso8601_utc(cmd.timestamp_ms) << '\t' << (cmd.payload.empty() ? cmd.binding_id : cmd.payload) << '\n';
    if (!out) {
      disabled_.insert(a.id);
      return fail(a.id, "cannot write " + a.text("path"));
    }
    return {};
  }

  DispatchResult send_ip(const ActuatorConfig& a, const ActuatorCommand& cmd) {
    const std::string line = iso8601_utc(cmd.timestamp_ms) + "\t" + cmd.binding_id + "\t" + cmd.payload + "\n";
    const auto transport = *net::parse_transport(a.text("transport", "udp"));
    const int port = static_cast<int>(*parse_int(a.text("port")));
    auto err = net::send_line(a.text("host"), port, transport, line);
    if (err) err = net::send_line(a.text("host"), port, transport, line);  // one retry
    if (err) {
      ++dropped_;
      return fail(a.id, "message dropped: " + *err);
    }
    return {};
  }

  std::vector<ActuatorConfig> actuators_;
  StimulationSink stimulate_;
  std::map<std::string, RgbState> rgb_;
  std::map<std::string, bool> relay_;
  std::set<std::string> disabled_;
  std::map<std::string, std::size_t> errors_;
  std::vector<std::string> sink_log_;
  std::vector<std::string> error_log_;
  std::size_t dropped_ = 0;
};

}  // namespace phyto::actuate
