#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phyto/core.hpp"

namespace phyto::pipeline {

enum class Tier { short_term = 0, middle_term = 1, long_term = 2 };

inline constexpr std::array<Tier, 3> kTiers = {Tier::short_term, Tier::middle_term, Tier::long_term};

inline constexpr std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::short_term: return "short";
    case Tier::middle_term: return "middle";
    case Tier::long_term: return "long";
  }
  return "unknown";
}

inline std::optional<Tier> parse_tier(std::string_view s) {
  for (auto t : kTiers) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

/// Immutable point-in-time view of a tier, oldest record first.
using Snapshot = std::shared_ptr<const std::vector<Record>>;

/// Fixed-capacity ring of records. Once full the oldest record is evicted.
class TierPipe {
 public:
  TierPipe(Tier tier, std::size_t capacity) : tier_(tier), ring_(capacity) {
    if (capacity == 0) throw ConfigError("pipe: capacity must be positive");
  }

  Tier tier() const { return tier_; }
  std::size_t capacity() const { return ring_.size(); }
  std::size_t size() const { return fill_; }
  std::uint64_t cycle_count() const { return cycles_; }

  /// Appends; returns the last record of the cycle just completed, if any.
  std::optional<Record> push(Record r) {
    if (last_ts_ && r.timestamp_ms <= *last_ts_) {
      throw InputError("pipe: non-monotonic timestamp " + std::to_string(r.timestamp_ms));
    }
    last_ts_ = r.timestamp_ms;
    ring_[head_] = std::move(r);
    const std::size_t written = head_;
    head_ = (head_ + 1) % ring_.size();
    if (fill_ < ring_.size()) ++fill_;
    cached_.reset();
    if (++since_handoff_ == ring_.size()) {
      since_handoff_ = 0;
      ++cycles_;
      return ring_[written];
    }
    return std::nullopt;
  }

  Snapshot snapshot() const {
    if (!cached_) {
      auto v = std::make_shared<std::vector<Record>>();
      v->reserve(fill_);
      const std::size_t first = (head_ + ring_.size() - fill_) % ring_.size();
      for (std::size_t i = 0; i < fill_; ++i) v->push_back(ring_[(first + i) % ring_.size()]);
      cached_ = std::move(v);
    }
    return cached_;
  }

 private:
  Tier tier_;
  std::vector<Record> ring_;
  std::size_t head_ = 0;
  std::size_t fill_ = 0;
  std::size_t since_handoff_ = 0;
  std::uint64_t cycles_ = 0;
  std::optional<TimestampMs> last_ts_;
  mutable Snapshot cached_;
};

struct Capacities {
  std::size_t short_term = 60;
  std::size_t middle_term = 60;
  std::size_t long_term = 24;
};

/// Tiers that signalled "new data ready" on a push.
struct TierEvents {
  std::array<bool, 3> ready{};

  bool operator[](Tier t) const { return ready[static_cast<std::size_t>(t)]; }
  std::vector<Tier> tiers() const {
    std::vector<Tier> out;
    for (auto t : kTiers) {
      if ((*this)[t]) out.push_back(t);
    }
    return out;
  }
};

/// Short/middle/long cascade. Hand-off forwards the last record of each
/// completed cycle to the next tier.
class PipeSet {
 public:
  explicit PipeSet(Capacities caps = {})
      : pipes_{TierPipe(Tier::short_term, caps.short_term), TierPipe(Tier::middle_term, caps.middle_term),
               TierPipe(Tier::long_term, caps.long_term)} {}

  TierEvents push(Record r) {
    TierEvents ev;
    std::optional<Record> carry = std::move(r);
    for (std::size_t i = 0; i < pipes_.size() && carry; ++i) {
      auto next = pipes_[i].push(std::move(*carry));
      ev.ready[i] = true;
      carry = std::move(next);
    }
    return ev;
  }

  Snapshot snapshot(Tier t) const { return pipes_[static_cast<std::size_t>(t)].snapshot(); }
  const TierPipe& pipe(Tier t) const { return pipes_[static_cast<std::size_t>(t)]; }

 private:
  std::array<TierPipe, 3> pipes_;
};

}  // namespace phyto::pipeline
