// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "traceobf/arch_gen.hpp"
#include "traceobf/backend.hpp"
#include "traceobf/builder.hpp"
#include "traceobf/error.hpp"
#include "traceobf/fixtures.hpp"
#include "traceobf/obfuscator.hpp"

namespace traceobf {
namespace {

const TraceDataset& corpus() {
  static const TraceDataset ds = build_dataset(40, cifar_arch_config(), LeakageCase::kC, 5, DeviceProfile{});
  return ds;
}

Evaluator small_evaluator(PlanMode mode) {
  Evaluator ev;
  ev.mode = mode;
  if (mode == PlanMode::kSequence) {
    ev.seq = std::make_shared<SeqPredictor>(
        SeqPredictor::train(corpus().records, LeakageCase::kC, {.tree_counts = {4, 6}, .max_depth = 8}));
  } else {
    ev.dim = std::make_shared<DimRegressor>(
        DimRegressor::train(corpus().records, LeakageCase::kC, {.tree_counts = {4, 6}, .max_depth = 8}));
  }
  return ev;
}

const Evaluator& seq_evaluator() {
  static const Evaluator ev = small_evaluator(PlanMode::kSequence);
  return ev;
}

const Evaluator& dim_evaluator() {
  static const Evaluator ev = small_evaluator(PlanMode::kDimension);
  return ev;
}

double recompute(const FitnessReport& r) {
  const double dev = (r.latency - (1.0 + r.budget) * r.clean_latency) / r.clean_latency;
  return r.mean_metric / (r.epsilon + dev * dev);
}

GaParams small_params(std::uint64_t seed) {
  return {.population = 8, .generations = 5, .sigma0 = 4.0, .sigma_halving_period = 2, .seed = seed};
}

TEST(RewardTest, MatchesClosedForm) {
  EXPECT_EQ(penalized_reward(0.0, 1.3, 1.0, 0.05, 0.05), 0.0);
  EXPECT_NEAR(penalized_reward(2.0, 1.05 * 1000.0, 1000.0, 0.05, 0.05), 40.0, 1e-9);
  EXPECT_NEAR(penalized_reward(2.0, 1.55 * 1000.0, 1000.0, 0.05, 0.05), 2.0 / 0.3, 1e-9);
  EXPECT_NEAR(penalized_reward(2.0, 0.55 * 1000.0, 1000.0, 0.05, 0.05), 2.0 / 0.3, 1e-9);
}

TEST(RewardTest, EqualMetricsPeakAtTheBudgetedLatency) {
  for (double budget : {0.0, 0.02, 0.1}) {
    const double target = (1.0 + budget) * 100.0;
    const double at = penalized_reward(1.0, target, 100.0, budget, 3e-4);
    for (double t = 90.0; t < 130.0; t += 0.37) {
      if (std::abs(t - target) > 1e-9) { EXPECT_LT(penalized_reward(1.0, t, 100.0, budget, 3e-4), at); }
    }
  }
}

TEST(SearchSpaceTest, GenomeLengthFollowsComplexLayers) {
  for (const char* name : {"conv_pair", "resnet20", "vgg11"}) {
    const Graph g = make_fixture(name).graph;
    for (PlanMode mode : {PlanMode::kSequence, PlanMode::kDimension}) {
      const SearchSpace s = search_space(g, mode);
      EXPECT_EQ(s.genome_length(), kGenesPerLayer * complex_layers(g).size());
      const ObfuscationPlan id = s.decode(Genome(s.genome_length(), 0));
      for (const LayerKnobs& k : id.entries) EXPECT_TRUE(k.is_identity());
      EXPECT_EQ(id.mode, mode);
    }
  }
}

TEST(SearchSpaceTest, DomainsRespectTheKnobPartition) {
  const Graph g = make_fixture("resnet20").graph;
  for (const LayerDomain& d : search_space(g, PlanMode::kDimension).layers) {
    EXPECT_EQ(d.branching, std::vector<Branching>{Branching::kNone});
    EXPECT_EQ(d.fusion_limit, std::vector<int>{kUnlimitedFusion});
    EXPECT_EQ(d.deepen, std::vector<int>{0});
  }
  for (const LayerDomain& d : search_space(g, PlanMode::kSequence).layers) {
    EXPECT_EQ(d.widen, std::vector<double>{1.0});
    EXPECT_EQ(d.strategy, std::vector<int>{0});
    EXPECT_LE(d.deepen.size(), 2u);
    EXPECT_LE(d.skip.size(), 2u);
    for (int v : d.deepen) EXPECT_TRUE(v == 0 || v == 1);
    for (int v : d.skip) EXPECT_TRUE(v == 0 || v == 1);
  }
}

TEST(SearchSpaceTest, IndivisibleChannelsPruneBranching) {
  GraphBuilder b({1, 4, 8, 8});
  const int six = b.conv(GraphBuilder::kInput, 6, 3);
  const int out = b.softmax(b.linear(b.global_pool(b.relu(b.conv(b.relu(six), 8, 3))), 10));
  const SearchSpace s = search_space(b.finish(out), PlanMode::kSequence);
  const LayerDomain& d = s.layers.front();
  ASSERT_EQ(d.layer_id, six);
  const auto has = [&](Branching x) { return std::find(d.branching.begin(), d.branching.end(), x) != d.branching.end(); };
  EXPECT_TRUE(has(Branching::kOut2));
  EXPECT_FALSE(has(Branching::kOut4));
  EXPECT_TRUE(has(Branching::kIn4));
}

TEST(SearchSpaceTest, DecodeRejectsOutOfDomainGenomes) {
  const SearchSpace s = search_space(make_fixture("conv_pair").graph, PlanMode::kSequence);
  Genome g(s.genome_length(), 0);
  EXPECT_THROW(s.decode(Genome(3, 0)), Error);
  g[0] = s.gene_sizes()[0];
  EXPECT_THROW(s.decode(g), Error);
  g[0] = -1;
  EXPECT_THROW(s.decode(g), Error);
}

TEST(GeneticOperatorTest, MutationStaysInsideTheDomain) {
  Rng rng(5);
  std::vector<int> sizes;
  for (int i = 0; i < 40; ++i) sizes.push_back(1 + static_cast<int>(rng.index(6)));
  for (int trial = 0; trial < 500; ++trial) {
    Genome g = random_genome(sizes, 0.5, rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ASSERT_GE(g[i], 0);
      ASSERT_LT(g[i], sizes[i]);
    }
    const Genome m = mutate(g, sizes, 20.0, 1.0, rng);
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_GE(m[i], 0);
      EXPECT_LT(m[i], sizes[i]);
    }
    EXPECT_EQ(mutate(g, sizes, 20.0, 0.0, rng), g);
  }
}

TEST(GeneticOperatorTest, CrossoverSwapsTails) {
  const Genome a{1, 2, 3, 4};
  const Genome b{5, 6, 7, 8};
  const auto [x, y] = crossover(a, b, 1);
  EXPECT_EQ(x, (Genome{1, 6, 7, 8}));
  EXPECT_EQ(y, (Genome{5, 2, 3, 4}));
}

TEST(GeneticOperatorTest, SigmaHalvesOnSchedule) {
  const GaParams p{.sigma0 = 8.0, .sigma_halving_period = 4};
  EXPECT_EQ(mutation_sigma(p, 1), 8.0);
  EXPECT_EQ(mutation_sigma(p, 4), 8.0);
  EXPECT_EQ(mutation_sigma(p, 5), 4.0);
  EXPECT_EQ(mutation_sigma(p, 9), 2.0);
}

TEST(GeneticOperatorTest, ParametersAreValidated) {
  EXPECT_NO_THROW(check_ga_params({}));
  EXPECT_THROW(check_ga_params({.population = 7}), Error);
  EXPECT_THROW(check_ga_params({.population = 0}), Error);
  EXPECT_THROW(check_ga_params({.generations = -1}), Error);
  EXPECT_THROW(check_ga_params({.elite_fraction = 0.0}), Error);
  EXPECT_THROW(check_ga_params({.elite_fraction = 1.5}), Error);
  EXPECT_THROW(check_ga_params({.init_density = 0.0}), Error);
  EXPECT_THROW(check_ga_params({.mutated_genes = 0.0}), Error);
}

TEST(FitnessTest, InfeasiblePlansScoreZero) {
  const Graph g = make_fixture("conv_pair").graph;
  ObfuscationPlan plan = identity_plan(g, PlanMode::kSequence);
  plan.entries[0].branching = Branching::kIn4;  // c = 3
  const double clean = clean_latency(g, DeviceProfile{});
  const FitnessReport r = fitness(plan, g, seq_evaluator(), 0.05, clean, 0.05);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.failure.empty());
}

TEST(FitnessTest, IdentityPlanReproducesTheCleanLatency) {
  const Graph g = make_fixture("resnet20").graph;
  const double clean = clean_latency(g, DeviceProfile{});
  const FitnessReport r = fitness(identity_plan(g, PlanMode::kSequence), g, seq_evaluator(), 0.0, clean, 0.05);
  EXPECT_TRUE(r.feasible);
  EXPECT_DOUBLE_EQ(r.latency, clean);
  EXPECT_EQ(r.metrics.size(), seq_evaluator().members());
  EXPECT_NEAR(r.reward, r.mean_metric / 0.05, 1e-12);
}

TEST(GaTest, ContractHoldsInSequenceMode) {
  const Graph g = make_fixture("conv_pair").graph;
  const GaParams p = small_params(3);
  const GaResult r = run_ga(g, PlanMode::kSequence, 0.05, p, seq_evaluator());
  ASSERT_EQ(r.best_per_generation.size(), static_cast<std::size_t>(p.generations + 1));
  ASSERT_EQ(r.populations.size(), r.best_per_generation.size());
  EXPECT_TRUE(std::is_sorted(r.best_per_generation.begin(), r.best_per_generation.end()));
  for (const auto& pop : r.populations) EXPECT_EQ(pop.size(), static_cast<std::size_t>(p.population));
  EXPECT_EQ(r.log.size(), static_cast<std::size_t>(p.population * (p.generations + 1)));
  double best = 0.0;
  for (const GaCandidate& c : r.log) {
    best = std::max(best, c.report.reward);
    if (c.report.feasible) {
      EXPECT_NEAR(c.report.reward, recompute(c.report), 1e-9 * std::max(1.0, c.report.reward));
    }
  }
  EXPECT_EQ(r.best.reward, best);
  EXPECT_EQ(r.best_per_generation.back(), best);
}

TEST(GaTest, BestSurvivorIsCarriedForward) {
  const GaResult r = run_ga(make_fixture("conv_pair").graph, PlanMode::kSequence, 0.02, small_params(4), seq_evaluator());
  std::map<Genome, double> reward;
  for (const GaCandidate& c : r.log) reward[c.genome] = c.report.reward;
  for (std::size_t gen = 0; gen + 1 < r.populations.size(); ++gen) {
    const std::vector<Genome>& pop = r.populations[gen];
    const Genome& top = *std::max_element(pop.begin(), pop.end(), [&](const Genome& a, const Genome& b) {
      return reward.at(a) < reward.at(b);
    });
    const std::vector<Genome>& next = r.populations[gen + 1];
    EXPECT_NE(std::find(next.begin(), next.end(), top), next.end()) << "generation " << gen;
  }
}

TEST(GaTest, SameSeedIsBitIdentical) {
  const Graph g = make_fixture("conv_pair").graph;
  const GaResult a = run_ga(g, PlanMode::kDimension, 0.02, small_params(9), dim_evaluator());
  const GaResult b = run_ga(g, PlanMode::kDimension, 0.02, small_params(9), dim_evaluator());
  EXPECT_EQ(encode_generation_log(a), encode_generation_log(b));
  EXPECT_EQ(a.best.plan, b.best.plan);
  const GaResult c = run_ga(g, PlanMode::kDimension, 0.02, small_params(10), dim_evaluator());
  EXPECT_NE(encode_generation_log(a), encode_generation_log(c));
}

TEST(GaTest, ZeroGenerationsReturnsTheBestInitialCandidate) {
  GaParams p = small_params(2);
  p.generations = 0;
  const GaResult r = run_ga(make_fixture("conv_pair").graph, PlanMode::kSequence, 0.05, p, seq_evaluator());
  ASSERT_EQ(r.log.size(), static_cast<std::size_t>(p.population));
  double best = 0.0;
  for (const GaCandidate& c : r.log) best = std::max(best, c.report.reward);
  EXPECT_EQ(r.best.reward, best);
}

TEST(GaTest, GenerationLogHasOneRowPerCandidate) {
  const GaResult r = run_ga(make_fixture("conv_pair").graph, PlanMode::kSequence, 0.05, small_params(1), seq_evaluator());
  const std::string log = encode_generation_log(r);
  EXPECT_EQ(log.substr(0, log.find('\n')), "generation\tcandidate\treward\tmean_metric\tlatency_ratio\tfeasible\tplan");
  EXPECT_EQ(static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n')), r.log.size() + 1);
}

TEST(GaTest, MismatchedEvaluatorIsRejected) {
  EXPECT_THROW(run_ga(make_fixture("conv_pair").graph, PlanMode::kDimension, 0.05, small_params(1), seq_evaluator()),
               Error);
  EXPECT_THROW(run_ga(make_fixture("conv_pair").graph, PlanMode::kSequence, -0.1, small_params(1), seq_evaluator()),
               Error);
}

}  // namespace
}  // namespace traceobf
