// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// traceobf: train attackers, obfuscate graphs, audit and profile traces.
// Exit codes: 0 success, 1 usage or configuration error, 2 data or model error.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "traceobf/commands.hpp"
#include "traceobf/error.hpp"
#include "traceobf/plan.hpp"

namespace {

using namespace traceobf;

constexpr int kUsage = 1;
constexpr int kDataError = 2;

struct Flags {
  std::optional<std::string> config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> device;
  std::optional<std::string> models;
  std::optional<std::string> out;
  std::optional<std::string> eval_case;
  std::optional<std::string> mode;
  std::optional<double> budget;
  std::optional<int> generations;
  std::optional<int> population;
  std::optional<double> epsilon;
  std::optional<std::size_t> train_archs;
  std::optional<std::vector<std::string>> cases;
  std::optional<std::string> datasets;
  std::optional<std::string> arch_family;
  std::optional<std::vector<int>> targets;
  std::optional<std::vector<double>> budgets;
  std::optional<std::vector<std::string>> fixtures;
  std::optional<int> repeats;
};

LeakageCase to_case(const std::string& name) {
  const auto c = parse_case(name);
  if (!c) throw Error(ErrorCode::kConfig, fmt::format("unknown leakage case '{}'", name));
  return *c;
}

// Defaults, then the config file, then explicit flags.
RunConfig resolve(const Flags& f) {
  RunConfig c = f.config_file ? load_config(*f.config_file) : RunConfig{};
  if (f.seed) c.seed = *f.seed;
  if (f.device) c.device = *f.device;
  if (f.models) c.models_dir = *f.models;
  if (f.out) c.output_dir = *f.out;
  if (f.eval_case) c.eval_case = to_case(*f.eval_case);
  if (f.mode) {
    const auto m = parse_plan_mode(*f.mode);
    if (!m) throw Error(ErrorCode::kConfig, fmt::format("unknown mode '{}'", *f.mode));
    c.mode = *m;
  }
  if (f.budget) c.budget = *f.budget;
  if (f.generations) c.ga.generations = *f.generations;
  if (f.population) c.ga.population = *f.population;
  if (f.epsilon) c.ga.epsilon = *f.epsilon;
  if (f.train_archs) c.train_archs = *f.train_archs;
  if (f.cases) {
    c.cases.clear();
    for (const std::string& s : *f.cases) c.cases.push_back(to_case(s));
  }
  if (f.datasets) c.dataset_dir = *f.datasets;
  if (f.arch_family) c.arch_family = *f.arch_family;
  if (f.targets) c.target_layers = *f.targets;
  if (f.budgets) c.bench_budgets = *f.budgets;
  if (f.fixtures) c.bench_fixtures = *f.fixtures;
  if (f.repeats) c.bench_repeats = *f.repeats;
  check_config(c);
  return c;
}

std::optional<ObfuscationPlan> maybe_plan(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_plan(path);
}

int run_train(const RunConfig& c) {
  const TrainReport r = cmd_train(c);
  for (const TrainedCase& tc : r.cases) {
    fmt::print("case {}: held-out LER {:.4f} DER {:.4f}\n", case_name(tc.leak), tc.validation_ler,
               tc.validation_der);
  }
  for (const auto& p : r.files) fmt::print("wrote {}\n", p.string());
  return 0;
}

int run_obfuscate(const RunConfig& c, const std::string& graph) {
  const ObfuscateReport r = cmd_obfuscate(c, graph);
  const char* metric = c.mode == PlanMode::kSequence ? "LER" : "DER";
  if (r.infeasible_budget) {
    fmt::print(stderr, "warning: InfeasibleBudget: no candidate fits within twice the budget {:.4f}\n", c.budget);
  }
  if (!r.best.feasible) {
    fmt::print(stderr, "no feasible plan found: {}\n", r.best.failure);
    return kDataError;
  }
  fmt::print("{} clean {:.4f} obfuscated {:.4f}\n", metric, r.clean_metric, r.best.mean_metric);
  fmt::print("latency overhead {:.4f} (budget {:.4f})\n", r.best.latency / r.best.clean_latency - 1.0, c.budget);
  fmt::print("reward {:.6g}\n", r.best.reward);
  for (const auto& p : r.files) fmt::print("wrote {}\n", p.string());
  return 0;
}

int run_bench(const RunConfig& c) {
  const BenchReport r = cmd_bench(c);
  std::fputs(encode_bench(r).c_str(), stdout);
  fmt::print("wrote {}\n", (c.output_dir / "bench.tsv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace obfuscation for neural-network graphs"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Master seed");
  app.add_option("--device", f.device, "Device profile name or JSON file");
  app.add_option("--models", f.models, "Directory of trained attacker models");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--case", f.eval_case, "Leakage case the attacker observes (A, B, C)");

  auto* train = app.add_subcommand("train", "Generate random architectures and train attackers");
  train->add_option("-n,--archs", f.train_archs, "Number of random architectures");
  train->add_option("--cases", f.cases, "Leakage cases to train")->delimiter(',');
  train->add_option("--datasets", f.datasets, "Keep the generated trace datasets here");
  train->add_option("--family", f.arch_family, "cifar or imagenet");

  std::string graph;
  std::string plan_file;
  auto* obf = app.add_subcommand("obfuscate", "Search an obfuscation plan for a graph");
  obf->add_option("graph", graph, "Graph file or fixture:NAME")->required();
  obf->add_option("-b,--budget", f.budget, "Latency budget B");
  obf->add_option("--mode", f.mode, "sequence or dimension");
  obf->add_option("--generations", f.generations, "GA generations");
  obf->add_option("--population", f.population, "GA population size (even)");
  obf->add_option("--epsilon", f.epsilon, "Reward offset");
  obf->add_option("--targets", f.targets, "Layer ids scored in dimension mode")->delimiter(',');

  auto* eval = app.add_subcommand("evaluate", "Attack a graph with the trained models");
  eval->add_option("graph", graph, "Graph file or fixture:NAME")->required();
  eval->add_option("--plan", plan_file, "Apply this plan before attacking")->check(CLI::ExistingFile);
  eval->add_option("--targets", f.targets, "Layer ids to report dimensions for")->delimiter(',');

  std::string trace_out;
  std::string profile_case = "C";
  bool labels = false;
  auto* prof = app.add_subcommand("profile", "Write the simulated trace of a graph");
  prof->add_option("graph", graph, "Graph file or fixture:NAME")->required();
  prof->add_option("-o,--output", trace_out, "Trace file")->required();
  prof->add_option("--trace-case", profile_case, "Leakage case of the written trace");
  prof->add_option("--plan", plan_file, "Apply this plan before profiling")->check(CLI::ExistingFile);
  prof->add_flag("--labels", labels, "Append ground-truth labels");

  auto* bench = app.add_subcommand("bench", "Sweep budgets over fixtures with repeated searches");
  bench->add_option("--budgets", f.budgets, "Budgets to sweep, comma separated")->delimiter(',');
  bench->add_option("--fixtures", f.fixtures, "Fixtures to sweep, comma separated")->delimiter(',');
  bench->add_option("--repeats", f.repeats, "Searches per fixture and budget");
  bench->add_option("--mode", f.mode, "sequence or dimension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const RunConfig config = resolve(f);
    if (*train) return run_train(config);
    if (*obf) return run_obfuscate(config, graph);
    if (*eval) {
      std::fputs(format_evaluation(cmd_evaluate(config, graph, maybe_plan(plan_file))).c_str(), stdout);
      return 0;
    }
    if (*prof) {
      const Trace t = cmd_profile(config, graph, to_case(profile_case), maybe_plan(plan_file), trace_out, labels);
      fmt::print("wrote {} ({} steps, {:.0f} cycles)\n", trace_out, t.steps.size(), t.total_latency);
      return 0;
    }
    if (*bench) return run_bench(config);
  } catch (const Error& e) {
    fmt::print(stderr, "traceobf: {}\n", e.what());
    return e.code() == ErrorCode::kConfig ? kUsage : kDataError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "traceobf: {}\n", e.what());
    return kDataError;
  }
  return kUsage;
}
