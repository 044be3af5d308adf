#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tmrl/agents.hpp"
#include "tmrl/cartpole.hpp"
#include "tmrl/discretizer.hpp"
#include "tmrl/timewarp.hpp"

namespace tmrl {

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::QLearning;
  // false: run_matrix runs the baseline variant only, serve runs without automatic rewinds.
  bool timewarp_enabled = true;
  RewindPolicy rewind_policy;
  AgentConfig agent;
  PhysicsParams physics;
  BinBoundaries bounds;
  std::vector<std::int64_t> budgets{100, 200, 500, 1000, 2000, 5000, 10000, 20000, 30000, 40000, 50000, 100000};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::int64_t benchmark_cap = 500000;
  std::size_t snapshot_capacity = 0;

  void validate() const {
    agent.validate();
    rewind_policy.validate();
    if (!physics.valid()) throw Error("physics parameters must be strictly positive");
    if (!bounds.valid()) throw Error("bin edges must be strictly increasing");
    if (budgets.empty()) throw Error("budgets must not be empty");
    for (std::size_t i = 0; i < budgets.size(); ++i) {
      if (budgets[i] < 0 || (i > 0 && budgets[i] <= budgets[i - 1])) throw Error("budgets must be strictly increasing");
    }
    if (seeds.empty()) throw Error("seeds must not be empty");
    if (benchmark_cap <= 0) throw Error("benchmark_cap must be positive");
    if (snapshot_capacity == 1) throw Error("snapshot_capacity must be 0 (unbounded) or at least 2");
  }
};

namespace detail {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<Algorithm> kAlgorithmNames[] = {{Algorithm::QLearning, "q_learning"},
                                                          {Algorithm::ActorCritic, "actor_critic"}};
inline constexpr EnumName<Selection> kSelectionNames[] = {{Selection::EpsilonGreedy, "epsilon_greedy"},
                                                          {Selection::Boltzmann, "boltzmann"}};
inline constexpr EnumName<AlphaSchedule> kScheduleNames[] = {{AlphaSchedule::Constant, "constant"},
                                                             {AlphaSchedule::InverseVisitCount, "inverse_visit_count"}};
inline constexpr EnumName<RewindKind> kRewindNames[] = {{RewindKind::Halfway, "halfway"},
                                                        {RewindKind::FixedBack, "fixed_back"},
                                                        {RewindKind::FullReset, "full_reset"},
                                                        {RewindKind::Geometric, "geometric"}};

template <typename E, std::size_t N>
const char* enum_to_string(const EnumName<E> (&names)[N], E v) {
  for (const auto& n : names)
    if (n.value == v) return n.name;
  throw Error("unnamed enum value");
}

template <typename E, std::size_t N>
E enum_from_string(const EnumName<E> (&names)[N], std::string_view s, std::string_view what) {
  for (const auto& n : names)
    if (s == n.name) return n.value;
  throw Error("unknown " + std::string(what) + ": '" + std::string(s) + "'");
}

// Reads every key of obj into the matching setter, rejecting unknown keys.
template <typename F>
void for_each_key(const nlohmann::json& obj, std::string_view section, F&& assign) {
  if (!obj.is_object()) throw Error("config section '" + std::string(section) + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!assign(key, value)) throw Error("unknown config key '" + std::string(section) + "." + key + "'");
  }
}

template <typename T, std::size_t N>
void read_array(const nlohmann::json& v, std::array<T, N>& out, std::string_view key) {
  if (!v.is_array() || v.size() != N) throw Error("config key '" + std::string(key) + "' needs " + std::to_string(N) + " values");
  for (std::size_t i = 0; i < N; ++i) out[i] = v[i].get<T>();
}

}  // namespace detail

inline const char* to_string(Algorithm a) { return detail::enum_to_string(detail::kAlgorithmNames, a); }
inline const char* to_string(RewindKind k) { return detail::enum_to_string(detail::kRewindNames, k); }
inline const char* to_string(Selection s) { return detail::enum_to_string(detail::kSelectionNames, s); }
inline RewindKind rewind_kind_from_string(std::string_view s) {
  return detail::enum_from_string(detail::kRewindNames, s, "rewind policy kind");
}

inline nlohmann::ordered_json to_json(const RewindPolicy& p) {
  return {{"kind", to_string(p.kind)}, {"k", p.k}, {"p", p.p}, {"escalation", p.escalation}};
}

inline nlohmann::ordered_json to_json(const AgentConfig& c) {
  return {{"alpha", c.alpha},
          {"alpha_schedule", detail::enum_to_string(detail::kScheduleNames, c.alpha_schedule)},
          {"alpha_critic", c.alpha_critic},
          {"alpha_actor", c.alpha_actor},
          {"gamma", c.gamma},
          {"lambda", c.lambda},
          {"epsilon", c.epsilon},
          {"epsilon_decay", c.epsilon_decay},
          {"epsilon_final", c.epsilon_final},
          {"selection", to_string(c.selection)},
          {"temperature", c.temperature},
          {"traces_enabled", c.traces_enabled}};
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["algorithm"] = to_string(c.algorithm);
  j["timewarp_enabled"] = c.timewarp_enabled;
  j["rewind_policy"] = to_json(c.rewind_policy);
  j["agent"] = to_json(c.agent);
  j["physics"] = {{"track_length", c.physics.track_length}, {"pole_length", c.physics.pole_length},
                  {"pole_mass", c.physics.pole_mass},       {"cart_mass", c.physics.cart_mass},
                  {"dt", c.physics.dt},                     {"force_magnitude", c.physics.force_magnitude},
                  {"gravity", c.physics.gravity}};
  j["bounds"] = {{"x_edges", c.bounds.x_edges},
                 {"theta_edges_deg", c.bounds.theta_edges_deg},
                 {"x_dot_edges", c.bounds.x_dot_edges},
                 {"theta_dot_edges_deg", c.bounds.theta_dot_edges_deg}};
  j["budgets"] = c.budgets;
  j["seeds"] = c.seeds;
  j["benchmark_cap"] = c.benchmark_cap;
  j["snapshot_capacity"] = c.snapshot_capacity;
  return j;
}

inline void apply_rewind_policy(const nlohmann::json& j, RewindPolicy& p) {
  detail::for_each_key(j, "rewind_policy", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "kind") p.kind = rewind_kind_from_string(v.get<std::string>());
    else if (k == "k") p.k = v.get<std::int64_t>();
    else if (k == "p") p.p = v.get<double>();
    else if (k == "escalation") p.escalation = v.get<bool>();
    else return false;
    return true;
  });
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    detail::for_each_key(j, "", [&](const std::string& key, const nlohmann::json& v) {
      if (key == "algorithm") {
        c.algorithm = detail::enum_from_string(detail::kAlgorithmNames, v.get<std::string>(), "algorithm");
      } else if (key == "timewarp_enabled") {
        c.timewarp_enabled = v.get<bool>();
      } else if (key == "rewind_policy") {
        apply_rewind_policy(v, c.rewind_policy);
      } else if (key == "agent") {
        detail::for_each_key(v, "agent", [&](const std::string& k, const nlohmann::json& x) {
          auto& a = c.agent;
          if (k == "alpha") a.alpha = x.get<double>();
          else if (k == "alpha_schedule") a.alpha_schedule = detail::enum_from_string(detail::kScheduleNames, x.get<std::string>(), "alpha schedule");
          else if (k == "alpha_critic") a.alpha_critic = x.get<double>();
          else if (k == "alpha_actor") a.alpha_actor = x.get<double>();
          else if (k == "gamma") a.gamma = x.get<double>();
          else if (k == "lambda") a.lambda = x.get<double>();
          else if (k == "epsilon") a.epsilon = x.get<double>();
          else if (k == "epsilon_decay") a.epsilon_decay = x.get<bool>();
          else if (k == "epsilon_final") a.epsilon_final = x.get<double>();
          else if (k == "selection") a.selection = detail::enum_from_string(detail::kSelectionNames, x.get<std::string>(), "selection");
          else if (k == "temperature") a.temperature = x.get<double>();
          else if (k == "traces_enabled") a.traces_enabled = x.get<bool>();
          else return false;
          return true;
        });
      } else if (key == "physics") {
        detail::for_each_key(v, "physics", [&](const std::string& k, const nlohmann::json& x) {
          auto& p = c.physics;
          if (k == "track_length") p.track_length = x.get<double>();
          else if (k == "pole_length") p.pole_length = x.get<double>();
          else if (k == "pole_mass") p.pole_mass = x.get<double>();
          else if (k == "cart_mass") p.cart_mass = x.get<double>();
          else if (k == "dt") p.dt = x.get<double>();
          else if (k == "force_magnitude") p.force_magnitude = x.get<double>();
          else if (k == "gravity") p.gravity = x.get<double>();
          else return false;
          return true;
        });
      } else if (key == "bounds") {
        detail::for_each_key(v, "bounds", [&](const std::string& k, const nlohmann::json& x) {
          auto& b = c.bounds;
          if (k == "x_edges") detail::read_array(x, b.x_edges, k);
          else if (k == "theta_edges_deg") detail::read_array(x, b.theta_edges_deg, k);
          else if (k == "x_dot_edges") detail::read_array(x, b.x_dot_edges, k);
          else if (k == "theta_dot_edges_deg") detail::read_array(x, b.theta_dot_edges_deg, k);
          else return false;
          return true;
        });
      } else if (key == "budgets") {
        c.budgets = v.get<std::vector<std::int64_t>>();
      } else if (key == "seeds") {
        c.seeds = v.get<std::vector<std::uint64_t>>();
      } else if (key == "benchmark_cap") {
        c.benchmark_cap = v.get<std::int64_t>();
      } else if (key == "snapshot_capacity") {
        c.snapshot_capacity = v.get<std::size_t>();
      } else {
        return false;
      }
      return true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

// Comma-separated seed list, e.g. "7" or "1,2,3".
inline std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  std::string item;
  std::istringstream is{std::string(text)};
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("invalid seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw Error("empty seed list");
  return seeds;
}

// Loads a config file; REWIND_SEED, when set, replaces the seed list.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config '" + path + "': " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  if (const char* env = std::getenv("REWIND_SEED"); env != nullptr && *env != '\0') c.seeds = parse_seed_list(env);
  return c;
}

}  // namespace tmrl
