#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <variant>

#include "tmrl/cartpole.hpp"
#include "tmrl/discretizer.hpp"
#include "tmrl/random.hpp"

namespace tmrl {

// Dense (state, action) table over the 162 boxes.
template <typename T>
class StateActionTable {
 public:
  static constexpr std::size_t kSize = kNumStates * kNumActions;

  T& operator()(DiscreteStateId s, Action a) { return values_[s.value() * kNumActions + to_index(a)]; }
  const T& operator()(DiscreteStateId s, Action a) const { return values_[s.value() * kNumActions + to_index(a)]; }

  std::span<T, kNumActions> row(DiscreteStateId s) {
    return std::span<T, kNumActions>(values_.data() + s.value() * kNumActions, kNumActions);
  }
  std::span<const T, kNumActions> row(DiscreteStateId s) const {
    return std::span<const T, kNumActions>(values_.data() + s.value() * kNumActions, kNumActions);
  }

  std::span<T> flat() { return values_; }
  std::span<const T> flat() const { return values_; }
  void fill(T v) { values_.fill(v); }

  friend bool operator==(const StateActionTable&, const StateActionTable&) = default;

 private:
  std::array<T, kSize> values_{};
};

using QTable = StateActionTable<double>;
using TraceTable = StateActionTable<double>;

struct ActorCriticTables {
  std::array<double, kNumStates> critic_values{};
  StateActionTable<double> actor_preferences;

  friend bool operator==(const ActorCriticTables&, const ActorCriticTables&) = default;
};

enum class Selection { EpsilonGreedy, Boltzmann };
enum class AlphaSchedule { Constant, InverseVisitCount };

struct AgentConfig {
  double alpha = 0.5;
  AlphaSchedule alpha_schedule = AlphaSchedule::Constant;
  double alpha_critic = 0.5;
  double alpha_actor = 0.5;
  double gamma = 0.95;
  double lambda = 0.8;
  double epsilon = 0.02;
  // Linear decay from epsilon to epsilon_final over epsilon_decay_steps
  // updates; the trainer sets the step count to the training budget.
  bool epsilon_decay = true;
  double epsilon_final = 0.01;
  std::int64_t epsilon_decay_steps = 0;
  Selection selection = Selection::EpsilonGreedy;
  double temperature = 1.0;
  bool traces_enabled = false;

  double trace_decay() const { return lambda * gamma; }

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(alpha) || !unit(alpha_critic) || !unit(alpha_actor)) throw Error("learning rates must lie in [0,1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("gamma must lie in [0,1)");
    if (!(lambda >= 0.0 && lambda < 1.0)) throw Error("lambda must lie in [0,1)");
    if (!unit(epsilon) || !unit(epsilon_final)) throw Error("epsilon must lie in [0,1]");
    if (epsilon_decay_steps < 0) throw Error("epsilon_decay_steps must be non-negative");
    if (!(temperature > 0.0)) throw Error("Boltzmann temperature must be positive");
  }

  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

using ActionValues = std::array<double, kNumActions>;

inline ActionValues action_values(const QTable& q, DiscreteStateId s) {
  const auto r = q.row(s);
  return {r[0], r[1]};
}

inline ActionValues action_values(const ActorCriticTables& t, DiscreteStateId s) {
  const auto r = t.actor_preferences.row(s);
  return {r[0], r[1]};
}

// Ties go to PushLeft.
inline Action greedy_action(const ActionValues& v) { return v[1] > v[0] ? Action::PushRight : Action::PushLeft; }

inline double boltzmann_probability_right(const ActionValues& v, double temperature) {
  return 1.0 / (1.0 + std::exp((v[0] - v[1]) / temperature));
}

inline Action select_action(const ActionValues& v, Selection selection, double epsilon, double temperature, Rng& rng) {
  if (selection == Selection::Boltzmann) {
    return uniform01(rng) < boltzmann_probability_right(v, temperature) ? Action::PushRight : Action::PushLeft;
  }
  if (uniform01(rng) < epsilon) return uniform01(rng) < 0.5 ? Action::PushLeft : Action::PushRight;
  return greedy_action(v);
}

template <typename View>
Action select_action(const View& view, DiscreteStateId s, const AgentConfig& config, Rng& rng) {
  return select_action(action_values(view, s), config.selection, config.epsilon, config.temperature, rng);
}

// Accumulating trace: decay everything by lambda*gamma, then add one at the visit.
inline void trace_forward(TraceTable& traces, DiscreteStateId s, Action a, const AgentConfig& config) {
  const double decay = config.trace_decay();
  if (!(decay >= 0.0 && decay < 1.0)) throw Error("trace_forward: lambda*gamma must lie in [0,1)");
  for (double& e : traces.flat()) e *= decay;
  traces(s, a) += 1.0;
}

// Exact algebraic inverse of trace_forward for the same visited pair.
inline void trace_backward(TraceTable& traces, DiscreteStateId s, Action a, const AgentConfig& config) {
  const double decay = config.trace_decay();
  if (!(decay > 0.0)) throw Error("trace_backward: lambda*gamma must be positive");
  traces(s, a) -= 1.0;
  for (double& e : traces.flat()) e /= decay;
}

inline double max_value(const QTable& q, NextState next) {
  if (!next) return 0.0;
  const auto r = q.row(*next);
  return std::max(r[0], r[1]);
}

// Returns the temporal-difference error.
inline double q_update(QTable& q, DiscreteStateId s, Action a, double reward, NextState next, const AgentConfig& config,
                       double alpha, TraceTable* traces = nullptr) {
  const double delta = reward + config.gamma * max_value(q, next) - q(s, a);
  if (traces == nullptr) {
    q(s, a) += alpha * delta;
    return delta;
  }
  trace_forward(*traces, s, a, config);
  auto qs = q.flat();
  auto es = traces->flat();
  for (std::size_t i = 0; i < qs.size(); ++i) qs[i] += alpha * delta * es[i];
  return delta;
}

inline double q_update(QTable& q, DiscreteStateId s, Action a, double reward, NextState next, const AgentConfig& config,
                       TraceTable* traces = nullptr) {
  return q_update(q, s, a, reward, next, config, config.alpha, traces);
}

inline double actor_critic_update(ActorCriticTables& t, DiscreteStateId s, Action a, double reward, NextState next,
                                  const AgentConfig& config, TraceTable* traces = nullptr) {
  const double next_value = next ? t.critic_values[next->value()] : 0.0;
  const double delta = reward + config.gamma * next_value - t.critic_values[s.value()];
  if (traces == nullptr) {
    t.critic_values[s.value()] += config.alpha_critic * delta;
    t.actor_preferences(s, a) += config.alpha_actor * delta;
    return delta;
  }
  // State eligibility is the sum over its action traces.
  trace_forward(*traces, s, a, config);
  for (std::size_t i = 0; i < kNumStates; ++i) {
    const DiscreteStateId id(i);
    const auto e = traces->row(id);
    t.critic_values[i] += config.alpha_critic * delta * (e[0] + e[1]);
    auto pref = t.actor_preferences.row(id);
    pref[0] += config.alpha_actor * delta * e[0];
    pref[1] += config.alpha_actor * delta * e[1];
  }
  return delta;
}

// Tabular Q-learning with optional Q(lambda) traces (no cut-off on exploratory actions).
class QLearningAgent {
 public:
  using Tables = QTable;

  explicit QLearningAgent(AgentConfig config = {}) : config_(config) { config_.validate(); }

  Action act(DiscreteStateId s, Rng& rng) const {
    return select_action(action_values(q_, s), config_.selection, current_epsilon(), config_.temperature, rng);
  }
  Action greedy(DiscreteStateId s) const { return greedy_action(action_values(q_, s)); }

  double learn(DiscreteStateId s, Action a, double reward, NextState next) {
    double alpha = config_.alpha;
    if (config_.alpha_schedule == AlphaSchedule::InverseVisitCount) alpha = 1.0 / static_cast<double>(++visits_(s, a));
    ++updates_;
    return q_update(q_, s, a, reward, next, config_, alpha, config_.traces_enabled ? &traces_ : nullptr);
  }

  double current_epsilon() const {
    if (!config_.epsilon_decay || config_.epsilon_decay_steps <= 0) return config_.epsilon;
    const double frac = std::min(1.0, static_cast<double>(updates_) / static_cast<double>(config_.epsilon_decay_steps));
    return config_.epsilon + (config_.epsilon_final - config_.epsilon) * frac;
  }

  ActionValues values(DiscreteStateId s) const { return action_values(q_, s); }
  const QTable& tables() const { return q_; }
  QTable& tables() { return q_; }
  const TraceTable& traces() const { return traces_; }
  TraceTable& traces() { return traces_; }
  const AgentConfig& config() const { return config_; }
  AgentConfig& config() { return config_; }
  std::int64_t updates() const { return updates_; }

 private:
  AgentConfig config_;
  QTable q_;
  TraceTable traces_;
  StateActionTable<std::uint32_t> visits_;
  std::int64_t updates_ = 0;
};

// TD actor-critic: critic V(s), actor preferences with Boltzmann selection.
class ActorCriticAgent {
 public:
  using Tables = ActorCriticTables;

  explicit ActorCriticAgent(AgentConfig config = {}) : config_(config) { config_.validate(); }

  Action act(DiscreteStateId s, Rng& rng) const {
    return select_action(action_values(tables_, s), Selection::Boltzmann, 0.0, config_.temperature, rng);
  }
  // Mode of the softmax.
  Action greedy(DiscreteStateId s) const { return greedy_action(action_values(tables_, s)); }

  double learn(DiscreteStateId s, Action a, double reward, NextState next) {
    ++updates_;
    return actor_critic_update(tables_, s, a, reward, next, config_, config_.traces_enabled ? &traces_ : nullptr);
  }

  double current_epsilon() const { return 0.0; }

  ActionValues values(DiscreteStateId s) const { return action_values(tables_, s); }
  const ActorCriticTables& tables() const { return tables_; }
  ActorCriticTables& tables() { return tables_; }
  const TraceTable& traces() const { return traces_; }
  TraceTable& traces() { return traces_; }
  const AgentConfig& config() const { return config_; }
  AgentConfig& config() { return config_; }
  std::int64_t updates() const { return updates_; }

 private:
  AgentConfig config_;
  ActorCriticTables tables_;
  TraceTable traces_;
  std::int64_t updates_ = 0;
};

template <typename A>
concept Learner = requires(A agent, const A& cagent, DiscreteStateId s, Action a, NextState n, Rng& rng) {
  { cagent.act(s, rng) } -> std::same_as<Action>;
  { cagent.greedy(s) } -> std::same_as<Action>;
  { agent.learn(s, a, 0.0, n) } -> std::same_as<double>;
  { agent.traces() } -> std::same_as<TraceTable&>;
  { cagent.values(s) } -> std::same_as<ActionValues>;
};

static_assert(Learner<QLearningAgent>);
static_assert(Learner<ActorCriticAgent>);

enum class Algorithm { QLearning, ActorCritic };

using Agent = std::variant<QLearningAgent, ActorCriticAgent>;

inline Agent make_agent(Algorithm algorithm, const AgentConfig& config) {
  if (algorithm == Algorithm::ActorCritic) return ActorCriticAgent(config);
  return QLearningAgent(config);
}

}  // namespace tmrl
