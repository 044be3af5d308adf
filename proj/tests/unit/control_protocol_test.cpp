#include <sstream>

#include <gtest/gtest.h>

#include "tmrl/control_protocol.hpp"

namespace {

using Json = nlohmann::json;
using tmrl::ControlSession;

ControlSession paused_session(std::ostream* log = nullptr) {
  tmrl::ExperimentConfig c;
  c.seeds = {3};
  return ControlSession(c, /*start_running=*/false, 50.0, log);
}

Json only_reply(const ControlSession::Response& r) {
  EXPECT_EQ(r.replies.size(), 1u);
  return Json::parse(r.replies.at(0));
}

std::vector<Json> of_type(const std::vector<std::string>& msgs, const std::string& type) {
  std::vector<Json> out;
  for (const auto& m : msgs) {
    auto j = Json::parse(m);
    if (j["type"] == type) out.push_back(j);
  }
  return out;
}

void step_to(ControlSession& s, std::int64_t t) {
  while (s.session().state().time_index < t) {
    const auto r = s.handle(R"({"cmd":"step"})");
    ASSERT_EQ(of_type(r.replies, "error").size(), 0u);
  }
}

TEST(ControlProtocol, HelloEchoesConfig) {
  auto s = paused_session();
  const auto hello = Json::parse(s.hello());
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["config"]["seeds"], Json::array({3}));
  EXPECT_EQ(hello["config"]["rewind_policy"]["kind"], "halfway");
  EXPECT_EQ(hello["running"], false);
  const auto state = Json::parse(s.state_message());
  EXPECT_EQ(state["type"], "state");
  EXPECT_EQ(state["time_index"], 0);
  EXPECT_EQ(state["box"], 85);
  EXPECT_EQ(state["values"].size(), 2u);
}

TEST(ControlProtocol, MalformedMessages) {
  auto s = paused_session();
  for (const char* bad : {"not json", "[1,2]", R"({"command":"run"})", R"({"cmd":7})"}) {
    const auto j = only_reply(s.handle(bad));
    EXPECT_EQ(j["type"], "error") << bad;
  }
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"fly"})"))["type"], "error");
  EXPECT_EQ(s.session().forward_steps(), 0);
}

TEST(ControlProtocol, PauseStopsTicks) {
  tmrl::ExperimentConfig c;
  ControlSession s(c, true, 50.0);
  EXPECT_EQ(of_type(s.tick().broadcasts, "state").size(), 1u);
  const auto r = s.handle(R"({"cmd":"pause"})");
  EXPECT_EQ(only_reply(r)["type"], "ack");
  EXPECT_EQ(of_type(r.broadcasts, "command").size(), 1u);
  const auto steps = s.session().forward_steps();
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(s.tick().broadcasts.empty());
  EXPECT_EQ(s.session().forward_steps(), steps);
  s.handle(R"({"cmd":"step"})");
  EXPECT_EQ(s.session().forward_steps(), steps + 1);
  s.handle(R"({"cmd":"run"})");
  s.tick();
  EXPECT_EQ(s.session().forward_steps(), steps + 2);
}

TEST(ControlProtocol, StepBroadcastsOneState) {
  auto s = paused_session();
  const auto r = s.handle(R"({"cmd":"step"})");
  const auto states = of_type(r.broadcasts, "state");
  ASSERT_EQ(states.size(), 1u);
  EXPECT_EQ(states[0]["time_index"], 1);
  EXPECT_EQ(states[0]["metrics"]["forward_steps"], 1);
}

TEST(ControlProtocol, RewindStepsBackKeepsQ) {
  auto s = paused_session();
  // Train through a few failures so the Q-table is non-trivial.
  for (int i = 0; i < 2000; ++i) s.handle(R"({"cmd":"step"})");
  if (s.session().state().time_index < 20) step_to(s, 20);
  const auto t = s.session().state().time_index;
  const auto q = std::get<tmrl::QLearningAgent>(s.session().agent()).tables();
  const auto r = s.handle(R"({"cmd":"rewind","steps_back":5})");
  EXPECT_EQ(only_reply(r)["type"], "ack");
  const auto states = of_type(r.broadcasts, "state");
  ASSERT_EQ(states.size(), 1u);
  EXPECT_EQ(states[0]["time_index"], t - 5);
  EXPECT_EQ(std::get<tmrl::QLearningAgent>(s.session().agent()).tables(), q);
  const auto events = of_type(r.broadcasts, "rewind_event");
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0]["manual"], true);
  EXPECT_EQ(events[0]["restored_time"], t - 5);
}

TEST(ControlProtocol, RewindToTargetTime) {
  auto s = paused_session();
  step_to(s, 6);
  const auto r = s.handle(R"({"cmd":"rewind","target_time":2})");
  EXPECT_EQ(only_reply(r)["type"], "ack");
  EXPECT_EQ(s.session().state().time_index, 2);
  EXPECT_EQ(Json::parse(s.snapshot_times_json()), Json::array({0, 1, 2}));
}

TEST(ControlProtocol, RewindErrors) {
  auto s = paused_session();
  step_to(s, 3);
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"rewind","target_time":3})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"rewind","target_time":-1})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"rewind","steps_back":0})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"rewind"})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"rewind","steps_back":"two"})"))["type"], "error");
  EXPECT_EQ(s.session().state().time_index, 3);
}

TEST(ControlProtocol, SetParamEpsilon) {
  std::ostringstream log;
  auto s = paused_session(&log);
  const auto j = only_reply(s.handle(R"({"cmd":"set_param","name":"epsilon","value":0.05})"));
  EXPECT_EQ(j["type"], "ack");
  EXPECT_EQ(j["name"], "epsilon");
  const auto& agent = std::get<tmrl::QLearningAgent>(s.session().agent());
  EXPECT_DOUBLE_EQ(agent.current_epsilon(), 0.05);
  for (int i = 0; i < 50; ++i) s.handle(R"({"cmd":"step"})");
  EXPECT_DOUBLE_EQ(agent.current_epsilon(), 0.05);
  const auto line = Json::parse(log.str().substr(0, log.str().find('\n')));
  EXPECT_EQ(line["type"], "param_change");
  EXPECT_EQ(line["name"], "epsilon");
  EXPECT_DOUBLE_EQ(line["value"].get<double>(), 0.05);
}

TEST(ControlProtocol, SetParamRejections) {
  std::ostringstream log;
  auto s = paused_session(&log);
  const auto gamma = only_reply(s.handle(R"({"cmd":"set_param","name":"gamma","value":0.9})"));
  EXPECT_EQ(gamma["type"], "error");
  EXPECT_NE(gamma["message"].get<std::string>().find("not runtime-tunable"), std::string::npos);
  const auto range = only_reply(s.handle(R"({"cmd":"set_param","name":"epsilon","value":1.5})"));
  EXPECT_EQ(range["type"], "error");
  EXPECT_NE(range["message"].get<std::string>().find("out of range"), std::string::npos);
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"colour","value":1})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"temperature","value":0})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"rewind_p","value":1.0})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"rewind_k","value":0})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"rewind_policy","value":"sideways"})"))["type"], "error");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"epsilon"})"))["type"], "error");
  EXPECT_DOUBLE_EQ(s.session().agent_config().epsilon, tmrl::AgentConfig{}.epsilon);
  EXPECT_TRUE(log.str().empty());
}

TEST(ControlProtocol, SetParamPolicyFields) {
  auto s = paused_session();
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"rewind_policy","value":"geometric"})"))["type"], "ack");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"rewind_p","value":0.2})"))["type"], "ack");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"rewind_k","value":4})"))["type"], "ack");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"escalation","value":true})"))["type"], "ack");
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_param","name":"alpha","value":0.25})"))["type"], "ack");
  const auto& p = s.session().options().policy;
  EXPECT_EQ(p.kind, tmrl::RewindKind::Geometric);
  EXPECT_DOUBLE_EQ(p.p, 0.2);
  EXPECT_EQ(p.k, 4);
  EXPECT_TRUE(p.escalation);
  EXPECT_DOUBLE_EQ(s.session().agent_config().alpha, 0.25);
}

TEST(ControlProtocol, SetSpeedAndThrottle) {
  tmrl::ExperimentConfig c;
  ControlSession s(c, true, 50.0);
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_speed","steps_per_second":1000})"))["type"], "ack");
  EXPECT_DOUBLE_EQ(s.steps_per_second(), 1000.0);
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"set_speed","steps_per_second":-1})"))["type"], "error");
  // 1000 ticks over one simulated second yield at most ~60 state broadcasts.
  const auto t0 = ControlSession::Clock::now();
  int states = 0;
  for (int i = 0; i < 1000; ++i) states += of_type(s.tick(t0 + std::chrono::milliseconds(i)).broadcasts, "state").size();
  EXPECT_LE(states, 61);
  EXPECT_GE(states, 50);
  EXPECT_EQ(s.session().forward_steps(), 1000);
}

TEST(ControlProtocol, SequenceNumbersIncrease) {
  auto s = paused_session();
  std::int64_t last = 0;
  for (int i = 0; i < 100; ++i) {
    for (const auto& st : of_type(s.handle(R"({"cmd":"step"})").broadcasts, "state")) {
      EXPECT_GT(st["seq"].get<std::int64_t>(), last);
      last = st["seq"].get<std::int64_t>();
    }
  }
}

TEST(ControlProtocol, AutomaticRewindBroadcastsEvent) {
  auto s = paused_session();
  int events = 0;
  for (int i = 0; i < 500; ++i) events += of_type(s.handle(R"({"cmd":"step"})").broadcasts, "rewind_event").size();
  EXPECT_GT(events, 0);
}

TEST(ControlProtocol, ResetTrialSnapshotsAndGraph) {
  auto s = paused_session();
  step_to(s, 4);
  EXPECT_EQ(only_reply(s.handle(R"({"cmd":"snapshots"})"))["times"], Json::array({0, 1, 2, 3, 4}));
  const auto g = only_reply(s.handle(R"({"cmd":"graph"})"));
  EXPECT_EQ(g["graph"]["edges"].size() > 0, true);
  s.handle(R"({"cmd":"reset_trial"})");
  EXPECT_EQ(s.session().state().time_index, 0);
  EXPECT_EQ(Json::parse(s.snapshot_times_json()), Json::array({0}));
  EXPECT_EQ(Json::parse(s.graph_json())["edges"], g["graph"]["edges"]);
}

}  // namespace
