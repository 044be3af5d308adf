#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tmrl/agents.hpp"
#include "tmrl/cartpole.hpp"
#include "tmrl/discretizer.hpp"
#include "tmrl/random.hpp"
#include "tmrl/timewarp.hpp"
#include "tmrl/transition_graph.hpp"

namespace tmrl {

struct SessionOptions {
  bool timewarp = false;
  RewindPolicy policy;
  std::size_t snapshot_capacity = 0;
  // Keep snapshots in baseline mode too (manual rewinds from the control service).
  bool keep_snapshots = false;
  // Store the RNG stream in every snapshot. Only needed for bit-exact replay.
  bool capture_rng = false;
  // Restore the RNG stream on rewind instead of letting the live stream continue.
  bool restore_rng = false;
};

struct Transition {
  ContinuousState from;
  DiscreteStateId s;
  Action a = Action::PushLeft;
  double reward = 0.0;
  ContinuousState to;
  NextState next;
  bool failed = false;
};

struct FailureHandling {
  std::optional<RewindEvent> event;
  bool trial_reset = false;
};

struct StepReport {
  Transition transition;
  FailureHandling failure;
};

// One simulated world: environment, learner, snapshot store and transition
// graph. The learner only ever sees (s, a, r, s') tuples; rewinds happen
// around it.
class Session {
 public:
  Session(Agent agent, PhysicsParams physics, BinBoundaries bounds, SessionOptions options, std::uint64_t seed)
      : agent_(std::move(agent)),
        physics_(physics),
        bounds_(bounds),
        options_(options),
        rng_(seed),
        store_(options.snapshot_capacity) {
    if (!physics_.valid()) throw Error("physics parameters must be strictly positive");
    if (!bounds_.valid()) throw Error("bin edges must be strictly increasing");
    options_.policy.validate();
    begin_trial();
  }

  template <typename F>
  decltype(auto) visit(F&& f) {
    return std::visit(std::forward<F>(f), agent_);
  }
  template <typename F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), agent_);
  }

  // One forward simulation step with learning. Throws if the current state is failing.
  Transition advance() {
    if (failing_) throw Error("session: current state is failing; handle the failure first");
    Transition tr;
    tr.from = state_;
    tr.s = discretize(state_, bounds_, physics_);
    tr.a = visit([&](auto& a) { return a.act(tr.s, rng_); });
    const StepOutcome out = step(state_, tr.a, physics_);
    tr.to = out.next_state;
    tr.reward = out.reward;
    tr.failed = out.failed;
    tr.next = out.failed ? kFailure : NextState(discretize(tr.to, bounds_, physics_));
    visit([&](auto& a) { a.learn(tr.s, tr.a, tr.reward, tr.next); });

    graph_.record_transition(tr.s, tr.next);
    ++forward_steps_;
    ++trial_steps_;
    best_trial_steps_ = std::max(best_trial_steps_, tr.to.time_index);
    state_ = tr.to;
    failing_ = tr.failed;
    if (!failing_ && recording()) store_.record(make_snapshot());
    if (on_transition) on_transition(tr);
    return tr;
  }

  // Baseline: start a new trial. Time manipulation: turn the clock back.
  FailureHandling handle_failure() {
    if (!failing_) return {};
    if (!options_.timewarp) {
      reset_trial();
      return {std::nullopt, true};
    }
    const std::int64_t trial_start = store_.front().time_index();
    const RewindTarget target = choose_rewind_target(options_.policy, trial_start, state_.time_index, trial_events_, rng_);
    return rewind_to(target.time, target.escalation_level);
  }

  StepReport step_once() {
    StepReport r{advance(), {}};
    if (r.transition.failed) r.failure = handle_failure();
    return r;
  }

  // Shared by automatic failure handling and manual control. Landing on the
  // trial-start snapshot begins a new trial.
  FailureHandling rewind_to(std::int64_t target_time, int escalation_level = 0) {
    if (store_.empty()) throw Error("rewind: no snapshots recorded");
    if (target_time < 0 || target_time >= state_.time_index) throw Error("rewind: target must precede the current time");
    const std::int64_t trial_start = store_.front().time_index();
    RewindResult res = rewind(store_, target_time, state_.time_index, escalation_level);
    state_ = res.snapshot.state;
    failing_ = false;
    if (agent_traces_enabled()) {
      TraceTable& live = traces();
      if (res.snapshot.traces) {
        live = *res.snapshot.traces;
      } else {
        live.fill(0.0);
      }
    }
    if (options_.restore_rng && !res.snapshot.rng_state.empty()) rng_ = deserialize_rng(res.snapshot.rng_state);
    last_event_ = res.event;
    if (on_rewind) on_rewind(res.event);

    if (res.snapshot.time_index() == trial_start) {
      finish_trial();
      return {res.event, true};
    }
    ++rewind_count_;
    trial_events_.push_back(res.event);
    return {res.event, false};
  }

  void reset_trial() {
    finish_trial();
    store_.clear();
    begin_trial();
  }

  // Number of trials in which at least one step was taken.
  std::int64_t trial_count() const { return completed_trials_ + (trial_steps_ > 0 ? 1 : 0); }
  std::int64_t forward_steps() const { return forward_steps_; }
  std::int64_t best_trial_steps() const { return best_trial_steps_; }
  std::int64_t rewind_count() const { return rewind_count_; }
  std::int64_t trial_number() const { return completed_trials_ + 1; }
  bool failing() const { return failing_; }

  const ContinuousState& state() const { return state_; }
  std::optional<DiscreteStateId> current_box() const {
    if (failing_) return std::nullopt;
    return discretize(state_, bounds_, physics_);
  }
  ActionValues current_values() const {
    const auto box = current_box();
    if (!box) return {0.0, 0.0};
    return visit([&](const auto& a) { return a.values(*box); });
  }

  const Agent& agent() const { return agent_; }
  Agent& agent() { return agent_; }
  AgentConfig& agent_config() {
    return visit([](auto& a) -> AgentConfig& { return a.config(); });
  }
  TraceTable& traces() {
    return visit([](auto& a) -> TraceTable& { return a.traces(); });
  }
  const TransitionGraph& graph() const { return graph_; }
  const SnapshotStore& store() const { return store_; }
  std::span<const RewindEvent> trial_events() const { return trial_events_; }
  const std::optional<RewindEvent>& last_event() const { return last_event_; }
  const SessionOptions& options() const { return options_; }
  void set_policy(const RewindPolicy& p) {
    p.validate();
    options_.policy = p;
  }
  const PhysicsParams& physics() const { return physics_; }
  const BinBoundaries& bounds() const { return bounds_; }
  Rng& rng() { return rng_; }

  std::function<void(const Transition&)> on_transition;
  std::function<void(const RewindEvent&)> on_rewind;

 private:
  bool recording() const { return options_.timewarp || options_.keep_snapshots; }

  bool agent_traces_enabled() {
    return agent_config().traces_enabled;
  }

  Snapshot make_snapshot() {
    Snapshot snap;
    snap.state = state_;
    if (agent_traces_enabled()) snap.traces = std::make_shared<const TraceTable>(traces());
    if (options_.capture_rng) snap.rng_state = serialize(rng_);
    return snap;
  }

  void begin_trial() {
    state_ = initial_state();
    failing_ = false;
    trial_steps_ = 0;
    trial_events_.clear();
    traces().fill(0.0);
    if (recording()) store_.record(make_snapshot());
  }

  void finish_trial() {
    if (trial_steps_ > 0) ++completed_trials_;
    trial_steps_ = 0;
    trial_events_.clear();
    traces().fill(0.0);
  }

  Agent agent_;
  PhysicsParams physics_;
  BinBoundaries bounds_;
  SessionOptions options_;
  Rng rng_;
  SnapshotStore store_;
  TransitionGraph graph_;
  ContinuousState state_;
  bool failing_ = false;

  std::int64_t forward_steps_ = 0;
  std::int64_t trial_steps_ = 0;
  std::int64_t completed_trials_ = 0;
  std::int64_t best_trial_steps_ = 0;
  std::int64_t rewind_count_ = 0;
  std::vector<RewindEvent> trial_events_;
  std::optional<RewindEvent> last_event_;
};

}  // namespace tmrl
