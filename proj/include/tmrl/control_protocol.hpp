#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tmrl/config.hpp"
#include "tmrl/experiment.hpp"
#include "tmrl/session.hpp"

namespace tmrl {

// Message-level behavior of the live control service, independent of the
// transport. Every method runs on the simulation thread between steps.
//
// Client -> service: {"cmd": "run" | "pause" | "step" | "reset_trial" | "snapshots" | "graph"}
//                    {"cmd": "rewind", "target_time": t} or {"cmd": "rewind", "steps_back": k}
//                    {"cmd": "set_param", "name": n, "value": v}
//                    {"cmd": "set_speed", "steps_per_second": s}
// Service -> client: {"type": "hello" | "state" | "ack" | "error" | "metrics" | "rewind_event" | "command", ...}
class ControlSession {
 public:
  using Clock = std::chrono::steady_clock;
  using Json = nlohmann::ordered_json;

  static constexpr double kMaxBroadcastsPerSecond = 60.0;
  static constexpr double kMaxStepsPerSecond = 100000.0;

  struct Response {
    std::vector<std::string> replies;     // to the sender only
    std::vector<std::string> broadcasts;  // to every subscriber
  };

  ControlSession(ExperimentConfig config, bool start_running = true, double steps_per_second = 50.0,
                 std::ostream* log = nullptr)
      : config_(std::move(config)),
        session_(make_agent(config_.algorithm, config_.agent), config_.physics, config_.bounds, options_for(config_),
                 config_.seeds.front()),
        running_(start_running),
        steps_per_second_(steps_per_second),
        log_(log) {
    if (!(steps_per_second > 0.0 && steps_per_second <= kMaxStepsPerSecond)) throw Error("steps_per_second out of range");
  }

  std::string hello() const {
    Json j;
    j["type"] = "hello";
    j["config"] = to_json(config_);
    j["running"] = running_;
    j["steps_per_second"] = steps_per_second_;
    return j.dump();
  }

  std::string state_message() {
    const auto& s = session_.state();
    Json j;
    j["type"] = "state";
    j["seq"] = ++seq_;
    j["time_index"] = s.time_index;
    j["trial"] = session_.trial_number();
    j["state"] = {{"x", s.x}, {"x_dot", s.x_dot}, {"theta", s.theta}, {"theta_dot", s.theta_dot}};
    const auto box = session_.current_box();
    j["box"] = box ? Json(box->value()) : Json(nullptr);
    const auto v = session_.current_values();
    j["values"] = {v[0], v[1]};
    j["last_reward"] = last_reward_;
    j["metrics"] = metrics_json();
    j["last_rewind"] = session_.last_event() ? to_json(*session_.last_event()) : Json(nullptr);
    j["running"] = running_;
    j["steps_per_second"] = steps_per_second_;
    return j.dump();
  }

  std::string metrics_message() const {
    Json j = metrics_json();
    j["type"] = "metrics";
    return j.dump();
  }

  std::string snapshot_times_json() const { return Json(session_.store().times()).dump(); }
  std::string graph_json() const { return to_json(session_.graph()).dump(); }

  Response handle(std::string_view text) {
    Json msg;
    try {
      msg = Json::parse(text);
    } catch (const Json::exception& e) {
      return error_reply("", std::string("malformed message: ") + e.what());
    }
    if (!msg.is_object() || !msg.contains("cmd") || !msg["cmd"].is_string())
      return error_reply("", "malformed message: expected an object with a string \"cmd\"");
    const std::string cmd = msg["cmd"].get<std::string>();
    try {
      if (cmd == "run") {
        running_ = true;
        return ack(cmd, {}, true);
      }
      if (cmd == "pause") {
        running_ = false;
        return ack(cmd, {}, true);
      }
      if (cmd == "step") {
        Response r = ack(cmd, {}, true);
        append(r, advance_one(/*force_broadcast=*/true));
        return r;
      }
      if (cmd == "rewind") return manual_rewind(msg);
      if (cmd == "set_param") {
        if (!msg.contains("name") || !msg["name"].is_string() || !msg.contains("value"))
          return error_reply(cmd, "set_param needs \"name\" and \"value\"");
        return apply_param(msg["name"].get<std::string>(), msg["value"]);
      }
      if (cmd == "set_speed") {
        if (!msg.contains("steps_per_second")) return error_reply(cmd, "set_speed needs \"steps_per_second\"");
        return apply_param("steps_per_second", msg["steps_per_second"]);
      }
      if (cmd == "reset_trial") {
        session_.reset_trial();
        last_reward_ = 0.0;
        Response r = ack(cmd, {}, true);
        r.broadcasts.push_back(state_message());
        return r;
      }
      if (cmd == "snapshots") return ack(cmd, {{"times", session_.store().times()}}, false);
      if (cmd == "graph") return ack(cmd, {{"graph", to_json(session_.graph())}}, false);
    } catch (const Json::exception& e) {
      return error_reply(cmd, std::string("bad argument: ") + e.what());
    } catch (const Error& e) {
      return error_reply(cmd, e.what());
    }
    return error_reply(cmd, "unknown command '" + cmd + "'");
  }

  // Runtime-tunable whitelist: epsilon, temperature, alpha, rewind_policy,
  // rewind_k, rewind_p, escalation, steps_per_second.
  Response apply_param(const std::string& name, const nlohmann::json& value) {
    const char* cmd = "set_param";
    auto number = [&](double lo, double hi, bool lo_open) -> std::optional<double> {
      if (!value.is_number()) return std::nullopt;
      const double v = value.get<double>();
      if ((lo_open ? v <= lo : v < lo) || v > hi) return std::nullopt;
      return v;
    };
    auto range_error = [&](const std::string& range) { return error_reply(cmd, "value for '" + name + "' out of range " + range); };

    AgentConfig& ac = session_.agent_config();
    RewindPolicy policy = session_.options().policy;
    if (name == "epsilon") {
      auto v = number(0.0, 1.0, false);
      if (!v) return range_error("[0, 1]");
      ac.epsilon = *v;
      ac.epsilon_decay = false;
    } else if (name == "temperature") {
      auto v = number(0.0, 1e6, true);
      if (!v) return range_error("(0, 1e6]");
      ac.temperature = *v;
    } else if (name == "alpha") {
      auto v = number(0.0, 1.0, false);
      if (!v) return range_error("[0, 1]");
      ac.alpha = ac.alpha_critic = ac.alpha_actor = *v;
    } else if (name == "rewind_policy") {
      if (!value.is_string()) return error_reply(cmd, "rewind_policy expects one of halfway, fixed_back, full_reset, geometric");
      policy.kind = rewind_kind_from_string(value.get<std::string>());
      session_.set_policy(policy);
    } else if (name == "rewind_k") {
      if (!value.is_number_integer() || value.get<std::int64_t>() < 1) return range_error("[1, inf)");
      policy.k = value.get<std::int64_t>();
      session_.set_policy(policy);
    } else if (name == "rewind_p") {
      auto v = number(0.0, 1.0, true);
      if (!v || *v >= 1.0) return range_error("(0, 1)");
      policy.p = *v;
      session_.set_policy(policy);
    } else if (name == "escalation") {
      if (!value.is_boolean()) return error_reply(cmd, "escalation expects a boolean");
      policy.escalation = value.get<bool>();
      session_.set_policy(policy);
    } else if (name == "steps_per_second") {
      auto v = number(0.0, kMaxStepsPerSecond, true);
      if (!v) return range_error("(0, 100000]");
      steps_per_second_ = *v;
    } else if (name == "gamma" || name == "lambda" || name == "traces_enabled") {
      return error_reply(cmd, "'" + name + "' is not runtime-tunable");
    } else {
      return error_reply(cmd, "unknown parameter '" + name + "'");
    }
    log_line({{"type", "param_change"}, {"name", name}, {"value", value}, {"time_index", session_.state().time_index},
              {"forward_steps", session_.forward_steps()}});
    return ack(cmd, {{"name", name}, {"value", value}}, true);
  }

  // One step of the free-running loop. Above 60 steps/s state broadcasts
  // are decimated to at most 60 per second.
  Response tick(Clock::time_point now = Clock::now()) {
    if (!running_) return {};
    const bool throttled = steps_per_second_ > kMaxBroadcastsPerSecond &&
                           now - last_broadcast_ < std::chrono::duration<double>(1.0 / kMaxBroadcastsPerSecond);
    if (!throttled) last_broadcast_ = now;
    return advance_one(!throttled);
  }

  bool running() const { return running_; }
  double steps_per_second() const { return steps_per_second_; }
  std::uint64_t last_seq() const { return seq_; }
  Session& session() { return session_; }
  const Session& session() const { return session_; }
  const ExperimentConfig& config() const { return config_; }

 private:
  static SessionOptions options_for(const ExperimentConfig& c) {
    SessionOptions o;
    o.timewarp = c.timewarp_enabled;
    o.policy = c.rewind_policy;
    o.snapshot_capacity = c.snapshot_capacity;
    o.keep_snapshots = true;
    return o;
  }

  Json metrics_json() const {
    return {{"forward_steps", session_.forward_steps()},
            {"trial_count", session_.trial_count()},
            {"best_trial_steps", session_.best_trial_steps()},
            {"rewind_count", session_.rewind_count()},
            {"unique_states", session_.graph().unique_state_count()}};
  }

  Response advance_one(bool broadcast_state) {
    Response r;
    const StepReport rep = session_.step_once();
    last_reward_ = rep.transition.reward;
    if (rep.failure.event) {
      Json e = to_json(*rep.failure.event);
      e["type"] = "rewind_event";
      e["trial_reset"] = rep.failure.trial_reset;
      r.broadcasts.push_back(e.dump());
      log_event(*rep.failure.event, false);
    }
    if (broadcast_state) r.broadcasts.push_back(state_message());
    if (rep.transition.failed) r.broadcasts.push_back(metrics_message());
    return r;
  }

  Response manual_rewind(const Json& msg) {
    const char* cmd = "rewind";
    const std::int64_t now = session_.state().time_index;
    std::int64_t target = 0;
    if (msg.contains("target_time")) {
      target = msg["target_time"].get<std::int64_t>();
    } else if (msg.contains("steps_back")) {
      const std::int64_t back = msg["steps_back"].get<std::int64_t>();
      if (back < 1) return error_reply(cmd, "steps_back must be >= 1");
      target = now - back;
    } else {
      return error_reply(cmd, "rewind needs \"target_time\" or \"steps_back\"");
    }
    if (target < 0 || target >= now)
      return error_reply(cmd, "target_time must lie in [0, " + std::to_string(now) + ")");
    const FailureHandling h = session_.rewind_to(target);
    last_reward_ = 0.0;
    Response r = ack(cmd, {{"target_time", target}}, true);
    Json e = to_json(*h.event);
    e["type"] = "rewind_event";
    e["trial_reset"] = h.trial_reset;
    e["manual"] = true;
    r.broadcasts.push_back(e.dump());
    r.broadcasts.push_back(state_message());
    log_event(*h.event, true);
    return r;
  }

  Response ack(const std::string& cmd, Json extra, bool echo) {
    Response r;
    Json j;
    j["type"] = "ack";
    j["cmd"] = cmd;
    for (auto& [k, v] : extra.items()) j[k] = v;
    r.replies.push_back(j.dump());
    if (echo) {
      Json c;
      c["type"] = "command";
      c["cmd"] = cmd;
      for (auto& [k, v] : extra.items()) c[k] = v;
      r.broadcasts.push_back(c.dump());
    }
    return r;
  }

  static Response error_reply(const std::string& cmd, const std::string& message) {
    Json j;
    j["type"] = "error";
    if (!cmd.empty()) j["cmd"] = cmd;
    j["message"] = message;
    return {{j.dump()}, {}};
  }

  static void append(Response& into, Response&& from) {
    for (auto& m : from.replies) into.replies.push_back(std::move(m));
    for (auto& m : from.broadcasts) into.broadcasts.push_back(std::move(m));
  }

  void log_event(const RewindEvent& e, bool manual) {
    Json j = to_json(e);
    j["type"] = "rewind_event";
    j["manual"] = manual;
    log_line(std::move(j));
  }

  void log_line(Json j) {
    if (log_ == nullptr) return;
    *log_ << j.dump() << '\n';
    log_->flush();
  }

  ExperimentConfig config_;
  Session session_;
  bool running_ = true;
  double steps_per_second_ = 50.0;
  std::ostream* log_ = nullptr;
  std::uint64_t seq_ = 0;
  double last_reward_ = 0.0;
  Clock::time_point last_broadcast_{};
};

}  // namespace tmrl
