// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/obfuscator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "text_util.hpp"
#include "traceobf/builder.hpp"
#include "traceobf/error.hpp"
#include "traceobf/parallel.hpp"
#include "traceobf/transforms.hpp"

namespace traceobf {

namespace {

constexpr int kMaxDummies = 4;
constexpr int kMaxKernelWiden = 2;

bool is_layer_kind(OpKind k) { return k == OpKind::kConv2D || k == OpKind::kLinear; }

template <typename T>
std::size_t checked_index(const std::vector<T>& options, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= options.size()) {
    throw Error(ErrorCode::kPrecondition, "genome index outside its domain");
  }
  return static_cast<std::size_t>(index);
}

std::vector<double> metrics_on(const Evaluator& ev, const Graph& vanilla, const CompiledModel& model,
                               const Trace& trace) {
  std::vector<double> out;
  if (ev.mode == PlanMode::kSequence) {
    const LabelSequence truth = label_sequence(vanilla);
    for (std::size_t m = 0; m < ev.seq->members(); ++m) out.push_back(ler(ev.seq->predict(trace, m), truth));
    return out;
  }
  std::vector<int> targets = ev.target_layers;
  if (targets.empty()) {
    for (int id : complex_layers(vanilla)) {
      if (vanilla.node(id).kind == OpKind::kConv2D) targets.push_back(id);
    }
  }
  if (targets.empty()) throw Error(ErrorCode::kPrecondition, "no Conv2D layer to score");
  const std::vector<int> up = upstream_kernels(model);
  for (std::size_t m = 0; m < ev.dim->members(); ++m) {
    double total = 0.0;
    for (int id : targets) {
      const Node& n = vanilla.node(id);
      if (n.kind != OpKind::kConv2D) {
        throw Error(ErrorCode::kPrecondition, fmt::format("target {} is not a Conv2D layer", id));
      }
      const int step = layer_step(model, id);
      const Dims pred = predict_dims(*ev.dim, trace, static_cast<std::size_t>(step), up[step], m);
      total += der(pred, Dims{n.attrs.in_channels, n.attrs.out_channels});
    }
    out.push_back(total / static_cast<double>(targets.size()));
  }
  return out;
}

}  // namespace

int layer_step(const CompiledModel& model, int layer_id) {
  for (const Kernel& k : model.kernels) {
    if (k.anchor() == layer_id) return k.index;
  }
  throw Error(ErrorCode::kPrecondition, fmt::format("layer {} issues no kernel", layer_id));
}

std::vector<int> SearchSpace::gene_sizes() const {
  std::vector<int> sizes;
  sizes.reserve(genome_length());
  for (const LayerDomain& d : layers) {
    if (mode == PlanMode::kSequence) {
      sizes.insert(sizes.end(), {static_cast<int>(d.branching.size()), static_cast<int>(d.fusion_limit.size()),
                                 static_cast<int>(d.deepen.size()), static_cast<int>(d.skip.size())});
    } else {
      sizes.insert(sizes.end(), {static_cast<int>(d.widen.size()), static_cast<int>(d.kernel_widen.size()),
                                 static_cast<int>(d.dummy.size()), static_cast<int>(d.strategy.size())});
    }
  }
  return sizes;
}

ObfuscationPlan SearchSpace::decode(const Genome& genome) const {
  if (genome.size() != genome_length()) {
    throw Error(ErrorCode::kPrecondition, "genome length does not match the search space");
  }
  ObfuscationPlan plan{mode, {}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDomain& d = layers[i];
    const int* g = genome.data() + kGenesPerLayer * i;
    LayerKnobs k;
    k.layer_id = d.layer_id;
    if (mode == PlanMode::kSequence) {
      k.branching = d.branching[checked_index(d.branching, g[0])];
      k.fusion_limit = d.fusion_limit[checked_index(d.fusion_limit, g[1])];
      k.deepen = d.deepen[checked_index(d.deepen, g[2])];
      k.skip = d.skip[checked_index(d.skip, g[3])];
    } else {
      k.widen_factor = d.widen[checked_index(d.widen, g[0])];
      k.kernel_widen = d.kernel_widen[checked_index(d.kernel_widen, g[1])];
      k.dummy_count = d.dummy[checked_index(d.dummy, g[2])];
      k.schedule_strategy = d.strategy[checked_index(d.strategy, g[3])];
    }
    plan.entries.push_back(k);
  }
  return plan;
}

SearchSpace search_space(const Graph& vanilla, PlanMode mode) {
  const Graph shaped = infer_shapes(vanilla);
  SearchSpace space;
  space.mode = mode;
  for (int id : complex_layers(shaped)) {
    const Node& n = shaped.node(id);
    LayerDomain d;
    d.layer_id = id;
    d.kind = n.kind;
    if (mode == PlanMode::kSequence) {
      if (is_layer_kind(n.kind)) {
        const std::pair<Branching, std::pair<BranchAxis, int>> options[] = {
            {Branching::kIn2, {BranchAxis::kInput, 2}},
            {Branching::kIn4, {BranchAxis::kInput, 4}},
            {Branching::kOut2, {BranchAxis::kOutput, 2}},
            {Branching::kOut4, {BranchAxis::kOutput, 4}},
        };
        for (const auto& [b, spec] : options) {
          if (is_branchable(shaped, id, spec.first, spec.second)) d.branching.push_back(b);
        }
        if (has_relu_activation(shaped, id)) d.deepen.push_back(1);
        d.skip.push_back(1);
      }
      d.fusion_limit.insert(d.fusion_limit.end(), {0, 1, 2});
    } else {
      if (is_layer_kind(n.kind) && is_widenable(shaped, id)) {
        const int j = n.attrs.out_channels;
        int last = j;
        for (double f : kWidenFactors) {
          const int widened = static_cast<int>(std::lround(f * j));
          if (widened > last) {
            d.widen.push_back(f);
            last = widened;
          }
        }
      }
      if (n.kind == OpKind::kConv2D) {
        for (int s = 1; s <= kMaxKernelWiden; ++s) d.kernel_widen.push_back(s);
      }
      for (int c = 1; c <= kMaxDummies; ++c) d.dummy.push_back(c);
      for (int s = 1; s <= kMaxStrategy; ++s) d.strategy.push_back(s);
    }
    space.layers.push_back(std::move(d));
  }
  return space;
}

LeakageCase Evaluator::leak() const {
  if (mode == PlanMode::kSequence) {
    if (!seq) throw Error(ErrorCode::kMissingModels, "no sequence predictor loaded");
    return seq->leak();
  }
  if (!dim) throw Error(ErrorCode::kMissingModels, "no dimension regressor loaded");
  return dim->leak();
}

std::size_t Evaluator::members() const {
  leak();
  return mode == PlanMode::kSequence ? seq->members() : dim->members();
}

double clean_latency(const Graph& vanilla, const DeviceProfile& device) {
  return profile_graph(vanilla, BackendHints{}, LeakageCase::kA, device).total_latency;
}

double penalized_reward(double mean_metric, double latency, double clean, double budget, double epsilon) {
  const double dev = (latency - (1.0 + budget) * clean) / clean;
  return mean_metric / (epsilon + dev * dev);
}

std::vector<double> attack_metrics(const Evaluator& evaluator, const Graph& vanilla,
                                   const CompiledModel& model) {
  const Trace trace = profile(model, evaluator.leak(), evaluator.device);
  return metrics_on(evaluator, vanilla, model, trace);
}

FitnessReport fitness(const ObfuscationPlan& plan, const Graph& vanilla, const Evaluator& evaluator,
                      double budget, double clean, double epsilon) {
  if (!(clean > 0.0)) throw Error(ErrorCode::kPrecondition, "clean latency must be positive");
  if (plan.mode != evaluator.mode) throw Error(ErrorCode::kPrecondition, "plan and evaluator modes differ");
  FitnessReport r;
  r.plan = plan;
  r.clean_latency = clean;
  r.budget = budget;
  r.epsilon = epsilon;
  const LeakageCase leak = evaluator.leak();
  CompiledModel model;
  try {
    const PlannedGraph pg = apply_plan(vanilla, plan);
    model = compile(pg.graph, pg.hints, evaluator.device);
  } catch (const Error& e) {
    r.failure = e.what();
    return r;
  }
  const Trace trace = profile(model, leak, evaluator.device);
  r.feasible = true;
  r.latency = trace.total_latency;
  r.metrics = metrics_on(evaluator, vanilla, model, trace);
  r.mean_metric = std::accumulate(r.metrics.begin(), r.metrics.end(), 0.0) /
                  static_cast<double>(r.metrics.size());
  r.reward = penalized_reward(r.mean_metric, r.latency, clean, budget, epsilon);
  return r;
}

void check_ga_params(const GaParams& p) {
  if (p.population < 2 || p.population % 2 != 0) {
    throw Error(ErrorCode::kConfig, "population must be a positive even number");
  }
  if (p.generations < 0) throw Error(ErrorCode::kConfig, "generations must be non-negative");
  if (!(p.elite_fraction > 0.0 && p.elite_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfig, "elite fraction must lie in (0, 1]");
  }
  if (p.sigma0 < 0.0 || p.sigma_halving_period < 1) {
    throw Error(ErrorCode::kConfig, "sigma0 must be non-negative and the halving period positive");
  }
  if (!(p.epsilon > 0.0)) throw Error(ErrorCode::kConfig, "epsilon must be positive");
  if (!(p.init_density > 0.0 && p.init_density <= 1.0)) {
    throw Error(ErrorCode::kConfig, "init density must lie in (0, 1]");
  }
  if (!(p.mutated_genes > 0.0)) throw Error(ErrorCode::kConfig, "mutated gene count must be positive");
}

double mutation_sigma(const GaParams& params, int generation) {
  const int halvings = std::max(generation - 1, 0) / params.sigma_halving_period;
  return std::ldexp(params.sigma0, -halvings);
}

std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, std::size_t pivot) {
  if (a.size() != b.size()) throw Error(ErrorCode::kPrecondition, "parents differ in length");
  pivot = std::min(pivot, a.size());
  Genome x(a.begin(), a.begin() + pivot);
  Genome y(b.begin(), b.begin() + pivot);
  x.insert(x.end(), b.begin() + pivot, b.end());
  y.insert(y.end(), a.begin() + pivot, a.end());
  return {std::move(x), std::move(y)};
}

Genome mutate(const Genome& g, const std::vector<int>& sizes, double sigma, double rate, Rng& rng) {
  Genome out = g;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (rate < 1.0 && !rng.bernoulli(rate)) continue;
    const double moved = out[i] + sigma * rng.normal();
    out[i] = static_cast<int>(std::clamp(std::round(moved), 0.0, static_cast<double>(sizes[i] - 1)));
  }
  return out;
}

Genome random_genome(const std::vector<int>& sizes, double max_density, Rng& rng) {
  const double density = rng.uniform() * max_density;
  Genome g(sizes.size(), 0);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] > 1 && rng.bernoulli(density)) g[i] = static_cast<int>(rng.uniform_int(1, sizes[i] - 1));
  }
  return g;
}

GaResult run_ga(const Graph& vanilla, PlanMode mode, double budget, const GaParams& params,
                const Evaluator& evaluator) {
  check_ga_params(params);
  if (budget < 0.0) throw Error(ErrorCode::kConfig, "budget must be non-negative");
  if (evaluator.mode != mode) throw Error(ErrorCode::kPrecondition, "evaluator mode differs from search mode");
  evaluator.leak();
  const Graph g = strip_weights(vanilla);
  const SearchSpace space = search_space(g, mode);
  const std::vector<int> sizes = space.gene_sizes();
  const double clean = clean_latency(g, evaluator.device);
  const std::size_t pop = static_cast<std::size_t>(params.population);
  Rng rng(params.seed);

  std::map<Genome, FitnessReport> memo;
  auto evaluate = [&](const std::vector<Genome>& genomes) {
    std::vector<Genome> fresh;
    for (const Genome& x : genomes) {
      if (!memo.count(x) && std::find(fresh.begin(), fresh.end(), x) == fresh.end()) fresh.push_back(x);
    }
    std::vector<FitnessReport> reports(fresh.size());
    parallel_for(fresh.size(), [&](std::size_t i) {
      reports[i] = fitness(space.decode(fresh[i]), g, evaluator, budget, clean, params.epsilon);
    });
    for (std::size_t i = 0; i < fresh.size(); ++i) memo.emplace(fresh[i], std::move(reports[i]));
  };

  GaResult result;
  bool have_best = false;
  auto record = [&](int generation, const std::vector<Genome>& genomes) {
    for (std::size_t i = 0; i < genomes.size(); ++i) {
      const FitnessReport& rep = memo.at(genomes[i]);
      result.log.push_back({generation, static_cast<int>(i), genomes[i], rep});
      if (!have_best || rep.reward > result.best.reward) {
        result.best = rep;
        have_best = true;
      }
    }
  };
  auto by_reward = [&](std::vector<Genome>& genomes) {
    std::stable_sort(genomes.begin(), genomes.end(), [&](const Genome& a, const Genome& b) {
      return memo.at(a).reward > memo.at(b).reward;
    });
  };

  std::vector<Genome> population(pop);
  for (Genome& x : population) x = random_genome(sizes, params.init_density, rng);
  evaluate(population);
  record(0, population);
  result.best_per_generation.push_back(result.best.reward);
  result.populations.push_back(population);

  const double rate = sizes.empty() ? 1.0 : std::min(1.0, params.mutated_genes / static_cast<double>(sizes.size()));
  const std::size_t elites =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(params.elite_fraction * pop)));
  for (int gen = 1; gen <= params.generations; ++gen) {
    const double sigma = mutation_sigma(params, gen);
    by_reward(population);
    std::vector<Genome> pool(population.begin(), population.begin() + std::min(elites, pop));
    std::vector<Genome> children;
    // Each round pairs the mating pool without replacement.
    while (children.size() < pop) {
      for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
      for (std::size_t i = 0; i + 1 < pool.size() && children.size() < pop; i += 2) {
        const std::size_t len = sizes.size();
        const std::size_t pivot = len > 1 ? static_cast<std::size_t>(rng.uniform_int(1, len - 1)) : 0;
        auto [a, b] = crossover(pool[i], pool[i + 1], pivot);
        children.push_back(mutate(a, sizes, sigma, rate, rng));
        if (children.size() < pop) children.push_back(mutate(b, sizes, sigma, rate, rng));
      }
    }
    evaluate(children);
    record(gen, children);
    population.insert(population.end(), children.begin(), children.end());
    by_reward(population);
    // Repeated genomes rank behind every distinct one.
    std::vector<Genome> kept, repeats;
    for (Genome& x : population) {
      (std::find(kept.begin(), kept.end(), x) == kept.end() ? kept : repeats).push_back(std::move(x));
    }
    kept.insert(kept.end(), repeats.begin(), repeats.end());
    population = std::move(kept);
    population.resize(pop);
    result.best_per_generation.push_back(result.best.reward);
    result.populations.push_back(population);
  }
  return result;
}

std::string encode_generation_log(const GaResult& result) {
  std::string out = "generation\tcandidate\treward\tmean_metric\tlatency_ratio\tfeasible\tplan\n";
  for (const GaCandidate& c : result.log) {
    const FitnessReport& r = c.report;
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\n", c.generation, c.index, detail::format_real(r.reward),
                       detail::format_real(r.mean_metric),
                       detail::format_real(r.feasible ? r.latency / r.clean_latency : 0.0),
                       r.feasible ? 1 : 0, encode_plan_inline(r.plan));
  }
  return out;
}

}  // namespace traceobf
