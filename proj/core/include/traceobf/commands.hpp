// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end commands: train attackers, search obfuscation plans, audit and
// profile graphs, and sweep budgets.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traceobf/config.hpp"

namespace traceobf {

struct GraphSource {
  std::string name;
  Graph graph;
  std::vector<int> target_layers;  // from the fixture, if any
};

// "fixture:NAME" selects a built-in graph; anything else is a graph file.
GraphSource load_graph_source(std::string_view spec);

// <dir>/seq_<case>.model or <dir>/dim_<case>.model
std::filesystem::path model_path(const std::filesystem::path& dir, PlanMode family, LeakageCase leak);

// Loads the predictor `mode` needs for `leak`; throws Error(kMissingModels)
// when its file is absent.
Evaluator load_evaluator(const RunConfig& config, PlanMode mode, LeakageCase leak,
                         std::vector<int> target_layers);

struct TrainedCase {
  LeakageCase leak = LeakageCase::kC;
  double validation_ler = 0.0;
  double validation_der = 0.0;
};

struct TrainReport {
  std::vector<std::filesystem::path> files;
  std::vector<TrainedCase> cases;
};

// Trains on the first 4/5 of the generated architectures and scores the rest.
TrainReport cmd_train(const RunConfig& config);

struct ObfuscateReport {
  std::string graph_name;
  FitnessReport best;
  double clean_metric = 0.0;
  bool infeasible_budget = false;  // no feasible candidate within 2B overhead
  std::vector<std::filesystem::path> files;
};

ObfuscateReport cmd_obfuscate(const RunConfig& config, std::string_view graph);

struct LayerDimensions {
  int layer_id = 0;
  Dims truth;
  std::vector<Dims> predicted;  // one per ensemble member
  double der = 0.0;             // mean over members
};

struct CaseEvaluation {
  LeakageCase leak = LeakageCase::kC;
  std::optional<std::vector<double>> ler;  // per member, when a sequence model exists
  std::vector<LayerDimensions> layers;     // target layers that still issue a kernel
  double mean_ler = 0.0;
  double mean_der = 0.0;
};

struct EvaluateReport {
  std::string graph_name;
  double latency = 0.0;
  std::vector<CaseEvaluation> cases;
};

// Attacks `graph`, obfuscated by `plan` when given, with every trained case in
// config.cases. Throws Error(kMissingModels) when no model is found.
EvaluateReport cmd_evaluate(const RunConfig& config, std::string_view graph,
                            const std::optional<ObfuscationPlan>& plan);
std::string format_evaluation(const EvaluateReport& report);

Trace cmd_profile(const RunConfig& config, std::string_view graph, LeakageCase leak,
                  const std::optional<ObfuscationPlan>& plan, const std::filesystem::path& out,
                  bool with_labels);

struct BenchRow {
  std::string fixture;
  double budget = 0.0;
  std::vector<double> metrics;    // best mean metric per repeat
  std::vector<double> overheads;  // T / T* - 1 per repeat
  double mean_metric = 0.0;
  double mean_overhead = 0.0;
};

struct BenchReport {
  PlanMode mode = PlanMode::kSequence;
  std::vector<BenchRow> rows;
};

// Repeat r of every fixture and budget searches with seed derive_seed(seed, r).
BenchReport cmd_bench(const RunConfig& config);
std::string encode_bench(const BenchReport& report);

}  // namespace traceobf
