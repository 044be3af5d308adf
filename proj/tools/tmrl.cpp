// Command-line front end: run the benchmark matrix, compare result sets,
// export transition graphs, and host a live control session.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "tmrl/config.hpp"
#include "tmrl/control_service.hpp"
#include "tmrl/experiment.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

tmrl::ExperimentConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    tmrl::ExperimentConfig c;
    if (const char* env = std::getenv("REWIND_SEED"); env != nullptr && *env != '\0')
      c.seeds = tmrl::parse_seed_list(env);
    return c;
  }
  return tmrl::load_config(path);
}

std::vector<tmrl::RunMetrics> load_results(const std::filesystem::path& dir) {
  std::ifstream in(dir / "results.csv");
  if (!in) throw tmrl::Error("cannot read " + (dir / "results.csv").string());
  return tmrl::read_results_csv(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-manipulated reinforcement learning on cart-pole"};
  app.require_subcommand(1);

  std::string config_path;
  std::filesystem::path out_dir = "results";
  unsigned parallelism = 1;
  auto* run = app.add_subcommand("run", "Train baseline and timewarp variants over every budget and seed");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::Range(1u, 256u));

  std::filesystem::path dir_a, dir_b;
  std::string variant_a = "baseline", variant_b = "timewarp";
  auto* cmp = app.add_subcommand("compare", "Compare two result directories (A = reference, B = candidate)");
  cmp->add_option("--a", dir_a, "Reference result directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--b", dir_b, "Candidate result directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--a-variant", variant_a, "Variant taken from A")->check(CLI::IsMember({"baseline", "timewarp"}));
  cmp->add_option("--b-variant", variant_b, "Variant taken from B")->check(CLI::IsMember({"baseline", "timewarp"}));

  std::filesystem::path run_log;
  std::string format = "dot";
  std::optional<std::int64_t> sel_budget;
  std::optional<std::string> sel_variant;
  std::optional<std::uint64_t> sel_seed;
  std::filesystem::path graph_out;
  auto* exp = app.add_subcommand("export-graph", "Export a recorded transition graph");
  exp->add_option("--run", run_log, "runs.jsonl produced by `run`")->required()->check(CLI::ExistingFile);
  exp->add_option("--format", format, "dot or json")->check(CLI::IsMember({"dot", "json"}));
  exp->add_option("--budget", sel_budget, "Select the run with this budget");
  exp->add_option("--variant", sel_variant, "Select baseline or timewarp")->check(CLI::IsMember({"baseline", "timewarp"}));
  exp->add_option("--seed", sel_seed, "Select the run with this seed");
  exp->add_option("--out", graph_out, "Write to file instead of stdout");

  std::string serve_config;
  tmrl::ControlServer::Options serve_opts;
  std::filesystem::path serve_out;
  auto* serve = app.add_subcommand("serve", "Host a live session for the control panel");
  serve->add_option("--config", serve_config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  serve->add_option("--port", serve_opts.port, "TCP port")->capture_default_str();
  serve->add_option("--address", serve_opts.address, "Bind address")->capture_default_str();
  serve->add_option("--speed", serve_opts.steps_per_second, "Initial steps per second")->check(CLI::Range(0.001, 100000.0));
  serve->add_flag("--paused", serve_opts.start_paused, "Start paused");
  serve->add_option("--static", serve_opts.static_dir, "Directory of panel files to serve")->check(CLI::ExistingDirectory);
  serve->add_option("--out", serve_out, "Directory for runs.jsonl (parameter changes, rewinds)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = tmrl::load_config(config_path);
      const auto result = tmrl::run_matrix(cfg, out_dir, parallelism);
      std::cout << "wrote " << result.runs.size() << " runs to " << out_dir.string() << '\n';
      if (result.comparison) std::cout << tmrl::to_json(*result.comparison).dump(2) << '\n';
    } else if (*cmp) {
      const auto a = load_results(dir_a);
      const auto b = load_results(dir_b);
      const auto rows = tmrl::aggregate(a, tmrl::variant_from_string(variant_a), &b, tmrl::variant_from_string(variant_b));
      std::cout << tmrl::to_json(tmrl::compare(rows)).dump(2) << '\n';
    } else if (*exp) {
      std::ifstream in(run_log);
      tmrl::GraphSelector sel{sel_budget, std::nullopt, sel_seed};
      if (sel_variant) sel.variant = tmrl::variant_from_string(*sel_variant);
      const auto graph = tmrl::read_graph_from_jsonl(in, sel);
      const auto fmt = format == "json" ? tmrl::GraphFormat::Json : tmrl::GraphFormat::Dot;
      if (graph_out.empty()) {
        tmrl::export_graph(graph, fmt, std::cout);
      } else {
        std::ofstream f(graph_out, std::ios::binary);
        tmrl::export_graph(graph, fmt, f);
      }
    } else if (*serve) {
      if (!serve_out.empty()) serve_opts.log_path = serve_out / "runs.jsonl";
      tmrl::ControlServer server(config_or_default(serve_config), serve_opts);
      server.start();
      std::cout << "serving on ws://" << serve_opts.address << ':' << server.port() << "/ws" << std::endl;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    }
  } catch (const tmrl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
