#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmrl/agents.hpp"
#include "tmrl/cartpole.hpp"
#include "tmrl/random.hpp"

namespace tmrl {

// Everything needed to resume the simulation at one time step. Learned
// values are deliberately absent: they survive a rewind.
struct Snapshot {
  ContinuousState state;
  std::shared_ptr<const TraceTable> traces;  // null when traces are disabled
  std::string rng_state;                     // empty unless RNG capture is on

  std::int64_t time_index() const { return state.time_index; }
};

// Ordered snapshots of the current trial. When over capacity, alternating
// interior entries are dropped; the first and the latest are always kept.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::size_t capacity = 0) : capacity_(capacity) {
    if (capacity == 1) throw Error("snapshot capacity must be 0 (unbounded) or at least 2");
  }

  void record(Snapshot snap) {
    if (!entries_.empty() && snap.time_index() <= entries_.back().time_index())
      throw Error("snapshot time_index " + std::to_string(snap.time_index()) + " not after " +
                  std::to_string(entries_.back().time_index()));
    entries_.push_back(std::move(snap));
    if (capacity_ > 0 && entries_.size() > capacity_) thin();
  }

  void thin() {
    while (capacity_ > 0 && entries_.size() > capacity_) {
      const std::size_t n = entries_.size();
      std::vector<Snapshot> kept;
      kept.reserve(n / 2 + 2);
      for (std::size_t i = 0; i < n; ++i) {
        if (i == 0 || i == n - 1 || i % 2 == 0) kept.push_back(std::move(entries_[i]));
      }
      entries_ = std::move(kept);
      stride_ *= 2;
    }
  }

  // Index of the latest entry with time_index <= t, or nullopt if t precedes all entries.
  std::optional<std::size_t> find_at_or_before(std::int64_t t) const {
    auto it = std::upper_bound(entries_.begin(), entries_.end(), t,
                               [](std::int64_t v, const Snapshot& s) { return v < s.time_index(); });
    if (it == entries_.begin()) return std::nullopt;
    return static_cast<std::size_t>(std::distance(entries_.begin(), it) - 1);
  }

  // Drops every entry after position i.
  void truncate_after(std::size_t i) { entries_.resize(std::min(entries_.size(), i + 1)); }

  void clear() {
    entries_.clear();
    stride_ = 1;
  }

  std::vector<std::int64_t> times() const {
    std::vector<std::int64_t> out;
    out.reserve(entries_.size());
    for (const auto& s : entries_) out.push_back(s.time_index());
    return out;
  }

  std::span<const Snapshot> entries() const { return entries_; }
  const Snapshot& front() const { return entries_.front(); }
  const Snapshot& back() const { return entries_.back(); }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::int64_t stride() const { return stride_; }

 private:
  std::vector<Snapshot> entries_;
  std::size_t capacity_ = 0;
  std::int64_t stride_ = 1;
};

enum class RewindKind { Halfway, FixedBack, FullReset, Geometric };

struct RewindPolicy {
  RewindKind kind = RewindKind::Halfway;
  std::int64_t k = 1;   // FixedBack distance
  double p = 0.5;       // Geometric parameter
  bool escalation = false;

  void validate() const {
    if (k < 1) throw Error("FixedBack distance must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw Error("Geometric parameter must lie in (0,1)");
  }

  static RewindPolicy halfway() { return {}; }
  static RewindPolicy fixed_back(std::int64_t k) { return {RewindKind::FixedBack, k}; }
  static RewindPolicy full_reset() { return {RewindKind::FullReset}; }
  static RewindPolicy geometric(double p) { return {RewindKind::Geometric, 1, p}; }

  friend bool operator==(const RewindPolicy&, const RewindPolicy&) = default;
};

enum class RestoredFrom { Exact, NearestEarlier };

struct RewindEvent {
  std::int64_t failure_time = 0;
  std::int64_t target_time = 0;
  std::int64_t restored_time = 0;
  RestoredFrom restored_from = RestoredFrom::Exact;
  int escalation_level = 0;

  friend bool operator==(const RewindEvent&, const RewindEvent&) = default;
};

struct RewindTarget {
  std::int64_t time = 0;
  int escalation_level = 0;
};

// prior_events are the rewinds already performed in the current trial.
inline RewindTarget choose_rewind_target(const RewindPolicy& policy, std::int64_t trial_start,
                                         std::int64_t failure_time, std::span<const RewindEvent> prior_events,
                                         Rng& rng) {
  if (failure_time <= trial_start) throw Error("choose_rewind_target: failure_time must follow trial_start");
  const std::int64_t span = failure_time - trial_start;
  std::int64_t distance = 0;
  switch (policy.kind) {
    case RewindKind::Halfway: distance = failure_time - (trial_start + span / 2); break;
    case RewindKind::FixedBack: distance = policy.k; break;
    case RewindKind::FullReset: distance = span; break;
    case RewindKind::Geometric: distance = geometric_trials(rng, policy.p); break;
  }

  int level = 0;
  if (policy.escalation && !prior_events.empty() && failure_time <= prior_events.back().failure_time) {
    level = prior_events.back().escalation_level + 1;
  }
  for (int i = 0; i < level && distance < span; ++i) distance *= 2;

  return {std::max(trial_start, failure_time - std::min(distance, span)), level};
}

struct RewindResult {
  Snapshot snapshot;
  RewindEvent event;
};

// Restores the latest snapshot at or before target_time and discards the
// entries after it. Targets before the earliest entry restore the earliest.
inline RewindResult rewind(SnapshotStore& store, std::int64_t target_time, std::int64_t failure_time,
                           int escalation_level = 0) {
  if (store.empty()) throw Error("rewind: snapshot store is empty");
  if (target_time > store.back().time_index()) throw Error("rewind: target is after the latest snapshot");
  const std::size_t idx = store.find_at_or_before(target_time).value_or(0);
  RewindResult out{store.entries()[idx], {}};
  out.event.failure_time = failure_time;
  out.event.target_time = target_time;
  out.event.restored_time = out.snapshot.time_index();
  out.event.restored_from = out.snapshot.time_index() == target_time ? RestoredFrom::Exact : RestoredFrom::NearestEarlier;
  out.event.escalation_level = escalation_level;
  store.truncate_after(idx);
  return out;
}

// Backward trace update applied steps_back times, most recent visit first.
inline TraceTable reverse_traces_analytic(TraceTable traces,
                                          std::span<const std::pair<DiscreteStateId, Action>> visited_history,
                                          std::size_t steps_back, const AgentConfig& config) {
  if (steps_back > visited_history.size()) throw Error("reverse_traces_analytic: history exhausted");
  if (steps_back > 0 && !(config.trace_decay() > 0.0)) throw Error("reverse_traces_analytic: lambda*gamma must be positive");
  for (std::size_t i = 0; i < steps_back; ++i) {
    const auto& [s, a] = visited_history[visited_history.size() - 1 - i];
    trace_backward(traces, s, a, config);
  }
  return traces;
}

}  // namespace tmrl
