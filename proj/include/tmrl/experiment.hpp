#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tmrl/config.hpp"
#include "tmrl/session.hpp"
#include "tmrl/transition_graph.hpp"

namespace tmrl {

enum class Variant { Baseline, Timewarp };

inline const char* to_string(Variant v) { return v == Variant::Baseline ? "baseline" : "timewarp"; }
inline Variant variant_from_string(std::string_view s) {
  if (s == "baseline") return Variant::Baseline;
  if (s == "timewarp") return Variant::Timewarp;
  throw Error("unknown variant '" + std::string(s) + "'");
}

struct RunMetrics {
  std::int64_t budget = 0;
  Variant variant = Variant::Baseline;
  std::uint64_t seed = 0;
  std::int64_t best_trial_steps = 0;
  std::int64_t benchmark_trial_steps = 0;
  std::int64_t unique_states = 0;
  std::int64_t trial_count = 0;
  std::int64_t rewind_count = 0;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

struct TrainingResult {
  Agent agent;
  RunMetrics metrics;
  TransitionGraph graph;
  std::vector<RewindEvent> events;
};

inline SessionOptions session_options(const ExperimentConfig& config, Variant variant) {
  SessionOptions o;
  o.timewarp = variant == Variant::Timewarp;
  o.policy = config.rewind_policy;
  o.snapshot_capacity = config.snapshot_capacity;
  return o;
}

inline Agent make_training_agent(const ExperimentConfig& config, std::int64_t budget) {
  AgentConfig ac = config.agent;
  ac.epsilon_decay_steps = budget;
  return make_agent(config.algorithm, ac);
}

// Greedy (or softmax-mode) trial with learning off. Returns the number of
// steps executed, the failing step included, capped at benchmark_cap.
inline std::int64_t run_benchmark_trial(const Agent& agent, const ExperimentConfig& config) {
  ContinuousState s = initial_state();
  return std::visit(
      [&](const auto& a) -> std::int64_t {
        while (s.time_index < config.benchmark_cap) {
          const StepOutcome out = step(s, a.greedy(discretize(s, config.bounds, config.physics)), config.physics);
          s = out.next_state;
          if (out.failed) break;
        }
        return s.time_index;
      },
      agent);
}

// Trains for exactly `budget` forward steps; a running trial is interrupted
// at the boundary. The benchmark trial is not run here.
inline TrainingResult run_training(const ExperimentConfig& config, std::int64_t budget, std::uint64_t seed,
                                   Variant variant, std::function<void(const Transition&)> log = {}) {
  Session session(make_training_agent(config, budget), config.physics, config.bounds, session_options(config, variant),
                  seed);
  session.on_transition = std::move(log);
  std::vector<RewindEvent> events;
  session.on_rewind = [&](const RewindEvent& e) { events.push_back(e); };
  while (session.forward_steps() < budget) session.step_once();

  TrainingResult r{session.agent(), {}, session.graph(), std::move(events)};
  r.metrics.budget = budget;
  r.metrics.variant = variant;
  r.metrics.seed = seed;
  r.metrics.best_trial_steps = session.best_trial_steps();
  r.metrics.unique_states = static_cast<std::int64_t>(session.graph().unique_state_count());
  r.metrics.trial_count = session.trial_count();
  r.metrics.rewind_count = session.rewind_count();
  return r;
}

inline TrainingResult run_cell(const ExperimentConfig& config, std::int64_t budget, std::uint64_t seed, Variant variant) {
  TrainingResult r = run_training(config, budget, seed, variant);
  r.metrics.benchmark_trial_steps = run_benchmark_trial(r.agent, config);
  return r;
}

struct MetricStats {
  double mean = 0.0;
  std::optional<double> stddev;  // sample deviation, needs >= 2 runs

  friend bool operator==(const MetricStats&, const MetricStats&) = default;
};

inline MetricStats stats_of(const std::vector<double>& xs) {
  MetricStats s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct VariantAggregate {
  MetricStats best_trial_steps;
  MetricStats benchmark_trial_steps;
  MetricStats unique_states;
  MetricStats trial_count;
  MetricStats rewind_count;
  std::vector<RunMetrics> runs;  // per seed, in seed order
};

inline VariantAggregate aggregate_runs(std::vector<RunMetrics> runs) {
  auto column = [&](auto member) {
    std::vector<double> xs;
    for (const auto& r : runs) xs.push_back(static_cast<double>(r.*member));
    return stats_of(xs);
  };
  VariantAggregate a;
  a.best_trial_steps = column(&RunMetrics::best_trial_steps);
  a.benchmark_trial_steps = column(&RunMetrics::benchmark_trial_steps);
  a.unique_states = column(&RunMetrics::unique_states);
  a.trial_count = column(&RunMetrics::trial_count);
  a.rewind_count = column(&RunMetrics::rewind_count);
  a.runs = std::move(runs);
  return a;
}

struct AggregateRow {
  std::int64_t budget = 0;
  VariantAggregate baseline;
  std::optional<VariantAggregate> timewarp;
};

// Groups per-run metrics by budget. `reference` fills the baseline slot and
// `candidate` the timewarp slot; a run list may serve as both.
inline std::vector<AggregateRow> aggregate(const std::vector<RunMetrics>& runs, Variant reference = Variant::Baseline,
                                           const std::vector<RunMetrics>* candidate_runs = nullptr,
                                           Variant candidate = Variant::Timewarp) {
  std::map<std::int64_t, std::pair<std::vector<RunMetrics>, std::vector<RunMetrics>>> by_budget;
  for (const auto& r : runs)
    if (r.variant == reference) by_budget[r.budget].first.push_back(r);
  const auto& cand = candidate_runs ? *candidate_runs : runs;
  std::map<std::int64_t, bool> candidate_budgets;
  for (const auto& r : cand) {
    if (r.variant != candidate) continue;
    candidate_budgets[r.budget] = true;
    if (candidate_runs && !by_budget.contains(r.budget)) throw Error("compare: budget sets do not match");
    by_budget[r.budget].second.push_back(r);
  }
  if (candidate_runs) {
    for (const auto& [b, _] : by_budget)
      if (!candidate_budgets.contains(b)) throw Error("compare: budget sets do not match");
  }
  std::vector<AggregateRow> rows;
  for (auto& [budget, pair] : by_budget) {
    AggregateRow row;
    row.budget = budget;
    row.baseline = aggregate_runs(std::move(pair.first));
    if (!pair.second.empty()) row.timewarp = aggregate_runs(std::move(pair.second));
    rows.push_back(std::move(row));
  }
  return rows;
}

struct SignTest {
  int wins = 0;    // candidate > reference
  int losses = 0;
  int ties = 0;
  double p_value = 1.0;  // one-sided P(X >= wins), X ~ Binomial(wins + losses, 1/2)
};

inline double sign_test_p_value(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0.0;
  double coef = 1.0;  // C(n, k)
  for (int k = 0; k <= n; ++k) {
    if (k > 0) coef = coef * (n - k + 1) / k;
    if (k >= wins) p += coef * std::pow(0.5, n);
  }
  return std::min(1.0, p);
}

struct BudgetComparison {
  std::int64_t budget = 0;
  std::optional<double> best_trial_ratio;
  std::optional<double> benchmark_ratio;
  std::optional<double> unique_states_ratio;
};

struct ComparisonReport {
  std::vector<BudgetComparison> budgets;
  double best_trial_improvement_pct = 0.0;
  double benchmark_improvement_pct = 0.0;
  double unique_states_improvement_pct = 0.0;
  std::vector<std::int64_t> sign_test_budgets;
  SignTest best_trial_sign;
  SignTest benchmark_sign;
  SignTest unique_states_sign;
};

inline std::optional<double> ratio(double candidate, double reference) {
  if (reference == 0.0) return candidate == 0.0 ? std::optional<double>(1.0) : std::nullopt;
  return candidate / reference;
}

// Ratios candidate/reference per budget, averaged improvements, and a paired
// sign test across seeds at the four largest budgets.
inline ComparisonReport compare(const std::vector<AggregateRow>& rows) {
  ComparisonReport rep;
  double sum[3] = {0, 0, 0};
  int n[3] = {0, 0, 0};
  for (const auto& row : rows) {
    if (!row.timewarp) throw Error("compare: row for budget " + std::to_string(row.budget) + " lacks a candidate variant");
    const auto& a = row.baseline;
    const auto& b = *row.timewarp;
    BudgetComparison bc{row.budget, ratio(b.best_trial_steps.mean, a.best_trial_steps.mean),
                        ratio(b.benchmark_trial_steps.mean, a.benchmark_trial_steps.mean),
                        ratio(b.unique_states.mean, a.unique_states.mean)};
    const std::optional<double>* rs[3] = {&bc.best_trial_ratio, &bc.benchmark_ratio, &bc.unique_states_ratio};
    for (int i = 0; i < 3; ++i) {
      if (*rs[i]) {
        sum[i] += (**rs[i] - 1.0) * 100.0;
        ++n[i];
      }
    }
    rep.budgets.push_back(bc);
  }
  rep.best_trial_improvement_pct = n[0] ? sum[0] / n[0] : 0.0;
  rep.benchmark_improvement_pct = n[1] ? sum[1] / n[1] : 0.0;
  rep.unique_states_improvement_pct = n[2] ? sum[2] / n[2] : 0.0;

  const std::size_t first = rows.size() > 4 ? rows.size() - 4 : 0;
  auto tally = [](SignTest& t, std::int64_t cand, std::int64_t ref) {
    if (cand > ref) ++t.wins;
    else if (cand < ref) ++t.losses;
    else ++t.ties;
  };
  for (std::size_t i = first; i < rows.size(); ++i) {
    rep.sign_test_budgets.push_back(rows[i].budget);
    const auto& ref = rows[i].baseline.runs;
    const auto& cand = rows[i].timewarp->runs;
    for (const auto& c : cand) {
      auto it = std::find_if(ref.begin(), ref.end(), [&](const RunMetrics& r) { return r.seed == c.seed; });
      if (it == ref.end()) continue;
      tally(rep.best_trial_sign, c.best_trial_steps, it->best_trial_steps);
      tally(rep.benchmark_sign, c.benchmark_trial_steps, it->benchmark_trial_steps);
      tally(rep.unique_states_sign, c.unique_states, it->unique_states);
    }
  }
  for (SignTest* t : {&rep.best_trial_sign, &rep.benchmark_sign, &rep.unique_states_sign})
    t->p_value = sign_test_p_value(t->wins, t->losses);
  return rep;
}

// ---- serialization ---------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kResultsHeader =
    "budget,variant,seed,best_trial_steps,benchmark_trial_steps,unique_states,trial_count,rewind_count";

inline void write_results_csv(std::ostream& os, const std::vector<RunMetrics>& runs) {
  os << kResultsHeader << '\n';
  for (const auto& r : runs) {
    os << r.budget << ',' << to_string(r.variant) << ',' << r.seed << ',' << r.best_trial_steps << ','
       << r.benchmark_trial_steps << ',' << r.unique_states << ',' << r.trial_count << ',' << r.rewind_count << '\n';
  }
}

inline std::vector<RunMetrics> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw Error("results.csv: unexpected header");
  std::vector<RunMetrics> runs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw Error("results.csv: malformed row '" + line + "'");
    try {
      RunMetrics r;
      r.budget = std::stoll(f[0]);
      r.variant = variant_from_string(f[1]);
      r.seed = std::stoull(f[2]);
      r.best_trial_steps = std::stoll(f[3]);
      r.benchmark_trial_steps = std::stoll(f[4]);
      r.unique_states = std::stoll(f[5]);
      r.trial_count = std::stoll(f[6]);
      r.rewind_count = std::stoll(f[7]);
      runs.push_back(r);
    } catch (const std::logic_error&) {
      throw Error("results.csv: malformed row '" + line + "'");
    }
  }
  return runs;
}

inline nlohmann::ordered_json to_json(const MetricStats& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev ? nlohmann::ordered_json(*s.stddev) : nlohmann::ordered_json(nullptr)}};
}

inline nlohmann::ordered_json to_json(const VariantAggregate& a) {
  return {{"best_trial_steps", to_json(a.best_trial_steps)},
          {"benchmark_trial_steps", to_json(a.benchmark_trial_steps)},
          {"unique_states", to_json(a.unique_states)},
          {"trial_count", to_json(a.trial_count)},
          {"rewind_count", to_json(a.rewind_count)},
          {"runs", a.runs.size()}};
}

inline nlohmann::ordered_json to_json(const std::vector<AggregateRow>& rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["budget"] = r.budget;
    j["baseline"] = to_json(r.baseline);
    j["timewarp"] = r.timewarp ? to_json(*r.timewarp) : nlohmann::ordered_json(nullptr);
    out.push_back(std::move(j));
  }
  return out;
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "budget,variant,runs,best_trial_steps_mean,best_trial_steps_sd,benchmark_trial_steps_mean,"
        "benchmark_trial_steps_sd,unique_states_mean,unique_states_sd,trial_count_mean,rewind_count_mean\n";
  auto sd = [](const MetricStats& s) { return s.stddev ? format_double(*s.stddev) : std::string(); };
  auto line = [&](std::int64_t budget, const char* variant, const VariantAggregate& a) {
    os << budget << ',' << variant << ',' << a.runs.size() << ',' << format_double(a.best_trial_steps.mean) << ','
       << sd(a.best_trial_steps) << ',' << format_double(a.benchmark_trial_steps.mean) << ','
       << sd(a.benchmark_trial_steps) << ',' << format_double(a.unique_states.mean) << ',' << sd(a.unique_states)
       << ',' << format_double(a.trial_count.mean) << ',' << format_double(a.rewind_count.mean) << '\n';
  };
  for (const auto& r : rows) {
    line(r.budget, "baseline", r.baseline);
    if (r.timewarp) line(r.budget, "timewarp", *r.timewarp);
  }
}

inline nlohmann::ordered_json to_json(const ComparisonReport& rep) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  auto sign = [](const SignTest& t) {
    return nlohmann::ordered_json{{"wins", t.wins}, {"losses", t.losses}, {"ties", t.ties}, {"p_value", t.p_value}};
  };
  nlohmann::ordered_json j;
  j["budgets"] = nlohmann::ordered_json::array();
  for (const auto& b : rep.budgets) {
    j["budgets"].push_back({{"budget", b.budget},
                            {"best_trial_ratio", opt(b.best_trial_ratio)},
                            {"benchmark_ratio", opt(b.benchmark_ratio)},
                            {"unique_states_ratio", opt(b.unique_states_ratio)}});
  }
  j["improvement_pct"] = {{"best_trial_steps", rep.best_trial_improvement_pct},
                          {"benchmark_trial_steps", rep.benchmark_improvement_pct},
                          {"unique_states", rep.unique_states_improvement_pct}};
  j["sign_test"] = {{"budgets", rep.sign_test_budgets},
                    {"best_trial_steps", sign(rep.best_trial_sign)},
                    {"benchmark_trial_steps", sign(rep.benchmark_sign)},
                    {"unique_states", sign(rep.unique_states_sign)}};
  return j;
}

inline nlohmann::ordered_json to_json(const RewindEvent& e) {
  return {{"failure_time", e.failure_time},
          {"target_time", e.target_time},
          {"restored_time", e.restored_time},
          {"escalation_level", e.escalation_level},
          {"restored_from", e.restored_from == RestoredFrom::Exact ? "exact" : "nearest_earlier"}};
}

inline nlohmann::ordered_json run_key(const RunMetrics& m) {
  return {{"budget", m.budget}, {"variant", to_string(m.variant)}, {"seed", m.seed}};
}

inline void write_run_jsonl(std::ostream& os, const TrainingResult& r) {
  nlohmann::ordered_json run = run_key(r.metrics);
  run["type"] = "run";
  run["best_trial_steps"] = r.metrics.best_trial_steps;
  run["benchmark_trial_steps"] = r.metrics.benchmark_trial_steps;
  run["unique_states"] = r.metrics.unique_states;
  run["trial_count"] = r.metrics.trial_count;
  run["rewind_count"] = r.metrics.rewind_count;
  os << run.dump() << '\n';
  for (const auto& e : r.events) {
    nlohmann::ordered_json j = run_key(r.metrics);
    j["type"] = "rewind_event";
    j.update(to_json(e));
    os << j.dump() << '\n';
  }
  nlohmann::ordered_json g = run_key(r.metrics);
  g["type"] = "graph";
  g["graph"] = to_json(r.graph);
  os << g.dump() << '\n';
}

struct GraphSelector {
  std::optional<std::int64_t> budget;
  std::optional<Variant> variant;
  std::optional<std::uint64_t> seed;
};

// First graph record in a runs.jsonl stream that matches the selector.
inline TransitionGraph read_graph_from_jsonl(std::istream& is, const GraphSelector& sel = {}) {
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("runs.jsonl: ") + e.what());
    }
    if (j.value("type", "") != "graph") continue;
    if (sel.budget && j.at("budget").get<std::int64_t>() != *sel.budget) continue;
    if (sel.variant && variant_from_string(j.at("variant").get<std::string>()) != *sel.variant) continue;
    if (sel.seed && j.at("seed").get<std::uint64_t>() != *sel.seed) continue;
    return graph_from_json(j.at("graph"));
  }
  throw Error("runs.jsonl: no matching graph record");
}

struct MatrixOutput {
  std::vector<RunMetrics> runs;
  std::vector<AggregateRow> rows;
  std::optional<ComparisonReport> comparison;
};

inline std::vector<Variant> variants_of(const ExperimentConfig& config) {
  if (config.timewarp_enabled) return {Variant::Baseline, Variant::Timewarp};
  return {Variant::Baseline};
}

// Runs every budget x variant x seed cell (cells may run in parallel, output
// order is fixed), then writes results.csv, aggregate.csv, aggregate.json,
// runs.jsonl and, with both variants, comparison.json into out_dir.
inline MatrixOutput run_matrix(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                               unsigned parallelism = 1) {
  config.validate();
  struct Cell {
    std::int64_t budget;
    Variant variant;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto budget : config.budgets)
    for (auto variant : variants_of(config))
      for (auto seed : config.seeds) cells.push_back({budget, variant, seed});

  std::vector<std::optional<TrainingResult>> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++)
      results[i] = run_cell(config, cells[i].budget, cells[i].seed, cells[i].variant);
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < std::max(1u, parallelism); ++t) pool.emplace_back(worker);
    worker();
  }

  MatrixOutput out;
  for (const auto& r : results) out.runs.push_back(r->metrics);
  out.rows = aggregate(out.runs);
  if (config.timewarp_enabled) out.comparison = compare(out.rows);

  std::filesystem::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (out_dir / name).string());
    return f;
  };
  {
    auto f = open("results.csv");
    write_results_csv(f, out.runs);
  }
  {
    auto f = open("aggregate.csv");
    write_aggregate_csv(f, out.rows);
  }
  {
    auto f = open("aggregate.json");
    f << to_json(out.rows).dump(2) << '\n';
  }
  {
    auto f = open("runs.jsonl");
    for (const auto& r : results) write_run_jsonl(f, *r);
  }
  if (out.comparison) {
    auto f = open("comparison.json");
    f << to_json(*out.comparison).dump(2) << '\n';
  }
  return out;
}

}  // namespace tmrl
