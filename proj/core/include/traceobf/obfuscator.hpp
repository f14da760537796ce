// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Genetic search over obfuscation plans scored against a trained attacker.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "traceobf/attacker.hpp"
#include "traceobf/plan.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {

// Options each knob may take on one vanilla layer; the first option of every
// list is the identity.
struct LayerDomain {
  int layer_id = 0;
  OpKind kind = OpKind::kConv2D;
  std::vector<Branching> branching{Branching::kNone};
  std::vector<int> fusion_limit{kUnlimitedFusion};
  std::vector<int> deepen{0};
  std::vector<int> skip{0};
  std::vector<double> widen{1.0};
  std::vector<int> kernel_widen{0};
  std::vector<int> dummy{0};
  std::vector<int> strategy{0};
};

inline constexpr std::size_t kGenesPerLayer = 4;

// A genome holds one option index per gene, kGenesPerLayer genes per layer:
// sequence mode (branching, fusion limit, deepen, skip), dimension mode
// (widen factor, kernel widening, dummy count, schedule strategy).
using Genome = std::vector<int>;

struct SearchSpace {
  PlanMode mode = PlanMode::kSequence;
  std::vector<LayerDomain> layers;

  std::size_t genome_length() const { return kGenesPerLayer * layers.size(); }
  std::vector<int> gene_sizes() const;
  // Throws Error(kPrecondition) for a genome of the wrong length or with an
  // index outside its gene's domain.
  ObfuscationPlan decode(const Genome& genome) const;
};

// Knob domains for every complex layer, with options that cannot apply to a
// layer pruned.
SearchSpace search_space(const Graph& vanilla, PlanMode mode);

// The attacker a plan is scored against. Sequence mode uses `seq`; dimension
// mode uses `dim` on `target_layers` (all vanilla Conv2D layers when empty).
struct Evaluator {
  PlanMode mode = PlanMode::kSequence;
  std::shared_ptr<const SeqPredictor> seq;
  std::shared_ptr<const DimRegressor> dim;
  DeviceProfile device;
  std::vector<int> target_layers;

  LeakageCase leak() const;
  std::size_t members() const;
};

// Total cycles of the vanilla graph compiled with default fusion and schedules.
double clean_latency(const Graph& vanilla, const DeviceProfile& device);

// mean / (epsilon + ((T - (1 + B) T*) / T*)^2)
double penalized_reward(double mean_metric, double latency, double clean, double budget, double epsilon);

struct FitnessReport {
  ObfuscationPlan plan;
  bool feasible = false;
  std::string failure;  // why the plan could not be applied
  double latency = 0.0;
  double clean_latency = 0.0;
  double budget = 0.0;
  double epsilon = 3e-4;
  std::vector<double> metrics;  // one per ensemble member
  double mean_metric = 0.0;
  double reward = 0.0;
};

// Index of the kernel anchored on vanilla layer `layer_id`; throws
// Error(kPrecondition) when the layer issues no kernel.
int layer_step(const CompiledModel& model, int layer_id);

// Per-member attack error on an already compiled candidate.
std::vector<double> attack_metrics(const Evaluator& evaluator, const Graph& vanilla,
                                   const CompiledModel& model);

// Infeasible plans report reward 0 instead of throwing.
FitnessReport fitness(const ObfuscationPlan& plan, const Graph& vanilla, const Evaluator& evaluator,
                      double budget, double clean, double epsilon);

struct GaParams {
  int population = 16;
  int generations = 20;
  double sigma0 = 8.0;
  int sigma_halving_period = 4;
  double elite_fraction = 0.5;
  double epsilon = 3e-4;
  // Each initial genome draws a density d ~ U(0, init_density) and sets every
  // gene to a uniform non-identity option with probability d.
  double init_density = 0.1;
  // Expected number of genes perturbed per offspring; values at or above the
  // genome length perturb every gene.
  double mutated_genes = 1.0;
  std::uint64_t seed = 0;
};

// Throws Error(kConfig) on an odd or non-positive population, a negative
// generation count, an elite fraction or init density outside (0, 1], or a
// non-positive mutated gene count.
void check_ga_params(const GaParams& params);

double mutation_sigma(const GaParams& params, int generation);

// Single-point crossover at `pivot` in [1, length - 1].
std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, std::size_t pivot);
// Adds rounded N(0, sigma) to each gene with probability `rate` and clips to
// its domain.
Genome mutate(const Genome& g, const std::vector<int>& sizes, double sigma, double rate, Rng& rng);
Genome random_genome(const std::vector<int>& sizes, double max_density, Rng& rng);

struct GaCandidate {
  int generation = 0;
  int index = 0;
  Genome genome;
  FitnessReport report;
};

struct GaResult {
  FitnessReport best;
  std::vector<GaCandidate> log;         // every evaluated candidate, generation 0 first
  std::vector<double> best_per_generation;  // best-so-far reward after each generation
  std::vector<std::vector<Genome>> populations;  // survivors after each generation
};

GaResult run_ga(const Graph& vanilla, PlanMode mode, double budget, const GaParams& params,
                const Evaluator& evaluator);

// Tab-separated: generation, candidate, reward, mean_metric, latency ratio,
// feasible, inline plan.
std::string encode_generation_log(const GaResult& result);

}  // namespace traceobf
