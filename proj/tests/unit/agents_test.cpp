#include <cmath>

#include <gtest/gtest.h>

#include "tmrl/agents.hpp"

namespace {

using tmrl::Action;
using tmrl::AgentConfig;
using tmrl::DiscreteStateId;

const DiscreteStateId kS{85};
const DiscreteStateId kNext{86};

// |count - n/2| within three binomial standard deviations.
void expect_fair(int right, int n) {
  const double sigma = std::sqrt(n * 0.25);
  EXPECT_LE(std::abs(right - n / 2.0), 3.0 * sigma) << right << " of " << n;
}

TEST(SelectAction, GreedyPicksLargerValue) {
  tmrl::QTable q;
  q(kS, Action::PushRight) = 0.5;
  AgentConfig c;
  c.epsilon = 0.0;
  tmrl::Rng rng(1);
  EXPECT_EQ(tmrl::select_action(q, kS, c, rng), Action::PushRight);
}

TEST(SelectAction, TieGoesLeft) {
  EXPECT_EQ(tmrl::greedy_action({0.0, 0.0}), Action::PushLeft);
  EXPECT_EQ(tmrl::greedy_action({-1.0, -1.0}), Action::PushLeft);
}

TEST(SelectAction, EpsilonOneIsUniform) {
  tmrl::QTable q;
  q(kS, Action::PushRight) = 10.0;
  AgentConfig c;
  c.epsilon = 1.0;
  tmrl::Rng rng(7);
  int right = 0;
  for (int i = 0; i < 10000; ++i) right += tmrl::select_action(q, kS, c, rng) == Action::PushRight;
  expect_fair(right, 10000);
}

TEST(SelectAction, BoltzmannEqualValuesIsUniform) {
  tmrl::QTable q;
  AgentConfig c;
  c.selection = tmrl::Selection::Boltzmann;
  tmrl::Rng rng(11);
  int right = 0;
  for (int i = 0; i < 10000; ++i) right += tmrl::select_action(q, kS, c, rng) == Action::PushRight;
  expect_fair(right, 10000);
}

TEST(SelectAction, GreedyInvariantToConstantShift) {
  tmrl::Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const tmrl::ActionValues v{tmrl::uniform01(rng) - 0.5, tmrl::uniform01(rng) - 0.5};
    const double c = (tmrl::uniform01(rng) - 0.5) * 100.0;
    EXPECT_EQ(tmrl::greedy_action(v), tmrl::greedy_action({v[0] + c, v[1] + c}));
  }
}

TEST(QUpdate, ZeroRewardOnZeroTableIsNoOp) {
  tmrl::QTable q;
  AgentConfig c;
  EXPECT_EQ(tmrl::q_update(q, kS, Action::PushLeft, 0.0, kNext, c), 0.0);
  EXPECT_EQ(tmrl::q_update(q, kS, Action::PushRight, 0.0, tmrl::kFailure, c), 0.0);
  EXPECT_EQ(q, tmrl::QTable{});
}

TEST(QUpdate, FailureRewardTerminal) {
  tmrl::QTable q;
  AgentConfig c;
  c.alpha = 0.5;
  c.gamma = 0.9;
  tmrl::q_update(q, kS, Action::PushLeft, -1.0, tmrl::kFailure, c);
  EXPECT_DOUBLE_EQ(q(kS, Action::PushLeft), -0.5);
  EXPECT_EQ(q(kS, Action::PushRight), 0.0);
}

TEST(QUpdate, BootstrapsFromMaxOfNextState) {
  tmrl::QTable q;
  AgentConfig c;
  c.alpha = 0.5;
  c.gamma = 0.9;
  q(kS, Action::PushLeft) = -0.1;
  q(kNext, Action::PushLeft) = -0.2;
  q(kNext, Action::PushRight) = -0.4;
  const double delta = tmrl::q_update(q, kS, Action::PushLeft, 0.0, kNext, c);
  EXPECT_NEAR(delta, -0.08, 1e-15);
  EXPECT_NEAR(q(kS, Action::PushLeft), -0.14, 1e-15);
}

TEST(QUpdate, ZeroRewardsKeepTableZeroWithTraces) {
  tmrl::QTable q;
  tmrl::TraceTable e;
  AgentConfig c;
  tmrl::Rng rng(3);
  for (int i = 0; i < 5000; ++i) {
    const DiscreteStateId s(rng() % 162);
    const tmrl::NextState n = (rng() % 10 == 0) ? tmrl::kFailure : tmrl::NextState(DiscreteStateId(rng() % 162));
    tmrl::q_update(q, s, tmrl::action_from_index(rng() & 1), 0.0, n, c, &e);
  }
  EXPECT_EQ(q, tmrl::QTable{});
}

TEST(QUpdate, StaysFiniteUnderRandomTransitions) {
  tmrl::QTable q;
  tmrl::TraceTable e;
  AgentConfig c;
  c.traces_enabled = true;
  tmrl::Rng rng(4);
  for (int i = 0; i < 100000; ++i) {
    const DiscreteStateId s(rng() % 162);
    const bool fail = rng() % 20 == 0;
    tmrl::q_update(q, s, tmrl::action_from_index(rng() & 1), fail ? -1.0 : 0.0,
                   fail ? tmrl::kFailure : tmrl::NextState(DiscreteStateId(rng() % 162)), c, &e);
  }
  for (double v : q.flat()) ASSERT_TRUE(std::isfinite(v));
  for (double v : e.flat()) ASSERT_TRUE(std::isfinite(v));
}

TEST(ActorCritic, ZeroRewardIsNoOp) {
  tmrl::ActorCriticTables t;
  tmrl::actor_critic_update(t, kS, Action::PushLeft, 0.0, kNext, AgentConfig{});
  EXPECT_EQ(t, tmrl::ActorCriticTables{});
}

TEST(ActorCritic, FailureUpdatesCriticAndActor) {
  tmrl::ActorCriticTables t;
  AgentConfig c;
  c.alpha_critic = c.alpha_actor = 0.5;
  tmrl::actor_critic_update(t, kS, Action::PushLeft, -1.0, tmrl::kFailure, c);
  EXPECT_DOUBLE_EQ(t.critic_values[kS.value()], -0.5);
  EXPECT_DOUBLE_EQ(t.actor_preferences(kS, Action::PushLeft), -0.5);
  EXPECT_EQ(t.actor_preferences(kS, Action::PushRight), 0.0);
  EXPECT_GT(tmrl::boltzmann_probability_right(tmrl::action_values(t, kS), c.temperature), 0.5);
}

TEST(Traces, ForwardFromZero) {
  tmrl::TraceTable e;
  tmrl::trace_forward(e, kS, Action::PushRight, AgentConfig{});
  EXPECT_EQ(e(kS, Action::PushRight), 1.0);
  double sum = 0.0;
  for (double v : e.flat()) sum += v;
  EXPECT_EQ(sum, 1.0);
}

TEST(Traces, ForwardDecaysAndAccumulates) {
  AgentConfig c;
  c.lambda = 0.8;
  c.gamma = 0.9;
  tmrl::TraceTable e;
  e(kS, Action::PushLeft) = 0.5;
  e(kNext, Action::PushRight) = 0.5;
  tmrl::trace_forward(e, kS, Action::PushLeft, c);
  EXPECT_NEAR(e(kS, Action::PushLeft), 1.36, 1e-15);
  EXPECT_NEAR(e(kNext, Action::PushRight), 0.36, 1e-15);
}

TEST(Traces, BackwardInvertsExample) {
  AgentConfig c;
  c.lambda = 0.8;
  c.gamma = 0.9;
  tmrl::TraceTable e;
  e(kS, Action::PushLeft) = 1.36;
  tmrl::trace_backward(e, kS, Action::PushLeft, c);
  EXPECT_NEAR(e(kS, Action::PushLeft), 0.5, 1e-15);
}

TEST(Traces, BackwardAfterSingleVisitIsZero) {
  AgentConfig c;
  tmrl::TraceTable e;
  tmrl::trace_forward(e, kS, Action::PushLeft, c);
  tmrl::trace_backward(e, kS, Action::PushLeft, c);
  EXPECT_EQ(e, tmrl::TraceTable{});
}

TEST(Traces, BackwardRejectsZeroDecay) {
  AgentConfig c;
  c.lambda = 0.0;
  tmrl::TraceTable e;
  EXPECT_THROW(tmrl::trace_backward(e, kS, Action::PushLeft, c), tmrl::Error);
}

TEST(Traces, NonNegativeAfterForwardUpdates) {
  AgentConfig c;
  tmrl::TraceTable e;
  tmrl::Rng rng(9);
  for (int i = 0; i < 2000; ++i) tmrl::trace_forward(e, DiscreteStateId(rng() % 162), tmrl::action_from_index(rng() & 1), c);
  for (double v : e.flat()) EXPECT_GE(v, 0.0);
}

TEST(Traces, RoundTripRandomTables) {
  tmrl::Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    AgentConfig c;
    c.gamma = 0.999;
    c.lambda = (0.01 + 0.98 * tmrl::uniform01(rng)) / c.gamma;
    tmrl::TraceTable e;
    for (double& v : e.flat()) v = tmrl::uniform01(rng) * 3.0;
    const tmrl::TraceTable orig = e;
    const DiscreteStateId s(rng() % 162);
    const Action a = tmrl::action_from_index(rng() & 1);
    tmrl::trace_forward(e, s, a, c);
    tmrl::trace_backward(e, s, a, c);
    for (std::size_t k = 0; k < e.flat().size(); ++k) {
      const double want = orig.flat()[k];
      ASSERT_LE(std::abs(e.flat()[k] - want), 1e-9 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(QLearningAgent, EpsilonDecaysLinearly) {
  AgentConfig c;
  c.epsilon = 0.1;
  c.epsilon_final = 0.01;
  c.epsilon_decay_steps = 100;
  tmrl::QLearningAgent agent(c);
  EXPECT_DOUBLE_EQ(agent.current_epsilon(), 0.1);
  for (int i = 0; i < 50; ++i) agent.learn(kS, Action::PushLeft, 0.0, kNext);
  EXPECT_NEAR(agent.current_epsilon(), 0.055, 1e-12);
  for (int i = 0; i < 100; ++i) agent.learn(kS, Action::PushLeft, 0.0, kNext);
  EXPECT_NEAR(agent.current_epsilon(), 0.01, 1e-12);
}

TEST(QLearningAgent, InverseVisitCountAlpha) {
  AgentConfig c;
  c.alpha_schedule = tmrl::AlphaSchedule::InverseVisitCount;
  tmrl::QLearningAgent agent(c);
  agent.learn(kS, Action::PushLeft, -1.0, tmrl::kFailure);
  EXPECT_DOUBLE_EQ(agent.tables()(kS, Action::PushLeft), -1.0);
  agent.learn(kS, Action::PushLeft, 0.0, tmrl::kFailure);
  EXPECT_DOUBLE_EQ(agent.tables()(kS, Action::PushLeft), -0.5);
}

TEST(QLearningAgent, TracesOnlyWhenEnabled) {
  AgentConfig c;
  tmrl::QLearningAgent plain(c);
  plain.learn(kS, Action::PushLeft, -1.0, tmrl::kFailure);
  EXPECT_EQ(plain.traces(), tmrl::TraceTable{});
  c.traces_enabled = true;
  tmrl::QLearningAgent traced(c);
  traced.learn(kS, Action::PushLeft, -1.0, tmrl::kFailure);
  EXPECT_EQ(traced.traces()(kS, Action::PushLeft), 1.0);
}

TEST(AgentConfig, Validation) {
  AgentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), tmrl::Error);
  c = {};
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), tmrl::Error);
  c = {};
  c.epsilon = 1.5;
  EXPECT_THROW(c.validate(), tmrl::Error);
  EXPECT_THROW(tmrl::QLearningAgent{c}, tmrl::Error);
}

TEST(MakeAgent, Variants) {
  EXPECT_TRUE(std::holds_alternative<tmrl::QLearningAgent>(tmrl::make_agent(tmrl::Algorithm::QLearning, {})));
  EXPECT_TRUE(std::holds_alternative<tmrl::ActorCriticAgent>(tmrl::make_agent(tmrl::Algorithm::ActorCritic, {})));
}

}  // namespace
