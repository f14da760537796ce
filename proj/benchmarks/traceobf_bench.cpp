// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Micro-benchmarks for the hot paths of the pipeline: graph passes, the
// device model, the attacker and one fitness evaluation.

#include <memory>

#include <benchmark/benchmark.h>

#include "traceobf/arch_gen.hpp"
#include "traceobf/backend.hpp"
#include "traceobf/builder.hpp"
#include "traceobf/fixtures.hpp"
#include "traceobf/interpreter.hpp"
#include "traceobf/metrics.hpp"
#include "traceobf/obfuscator.hpp"
#include "traceobf/transforms.hpp"

namespace traceobf {
namespace {

const char* const kFixtures[] = {"conv_pair", "resnet20", "vgg11", "resnet18", "mobilenet_v2"};

void BM_InferShapes(benchmark::State& state) {
  const Graph g = make_fixture(kFixtures[state.range(0)]).graph;
  for (auto _ : state) benchmark::DoNotOptimize(infer_shapes(g));
  state.SetLabel(kFixtures[state.range(0)]);
}
BENCHMARK(BM_InferShapes)->DenseRange(0, 4);

void BM_Fuse(benchmark::State& state) {
  const Graph g = infer_shapes(make_fixture(kFixtures[state.range(0)]).graph);
  for (auto _ : state) benchmark::DoNotOptimize(fuse(g));
  state.SetLabel(kFixtures[state.range(0)]);
}
BENCHMARK(BM_Fuse)->DenseRange(0, 4);

// Cold search: the cache is cleared before every iteration.
void BM_DefaultScheduleSearch(benchmark::State& state) {
  GraphBuilder b({1, 64, 32, 32});
  const Graph g = infer_shapes(b.finish(b.conv(GraphBuilder::kInput, static_cast<int>(state.range(0)), 3)));
  const Workload w = kernel_workload(g, Kernel{0, {0}, 0, false});
  const DeviceProfile d;
  for (auto _ : state) {
    clear_schedule_cache();
    benchmark::DoNotOptimize(default_schedule(w, d));
  }
}
BENCHMARK(BM_DefaultScheduleSearch)->Arg(64)->Arg(256);

void BM_CompileAndProfile(benchmark::State& state) {
  const Graph g = make_fixture(kFixtures[state.range(0)]).graph;
  const DeviceProfile d;
  compile(g, {}, d);  // warm the schedule cache
  for (auto _ : state) benchmark::DoNotOptimize(profile_graph(g, {}, LeakageCase::kC, d));
  state.SetLabel(kFixtures[state.range(0)]);
}
BENCHMARK(BM_CompileAndProfile)->DenseRange(0, 4);

void BM_ApplyPlan(benchmark::State& state) {
  const Graph g = make_fixture("resnet20").graph;
  const SearchSpace s = search_space(g, PlanMode::kSequence);
  Rng rng(1);
  const ObfuscationPlan plan = s.decode(random_genome(s.gene_sizes(), 0.3, rng));
  for (auto _ : state) benchmark::DoNotOptimize(apply_plan(g, plan));
}
BENCHMARK(BM_ApplyPlan);

void BM_Execute(benchmark::State& state) {
  Graph g = make_fixture("conv_pair", 1).graph;
  const Tensor x = random_normal_tensor(g.input_shape(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(execute(g, x));
}
BENCHMARK(BM_Execute)->Unit(benchmark::kMillisecond);

void BM_Levenshtein(benchmark::State& state) {
  Rng rng(3);
  const OpKind kinds[] = {OpKind::kConv2D, OpKind::kLinear, OpKind::kMaxPool, OpKind::kSoftMax};
  std::vector<OpKind> a(static_cast<std::size_t>(state.range(0)));
  std::vector<OpKind> b(a.size());
  for (auto& k : a) k = kinds[rng.index(4)];
  for (auto& k : b) k = kinds[rng.index(4)];
  for (auto _ : state) benchmark::DoNotOptimize(levenshtein(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Levenshtein)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);

struct TrainedModels {
  TraceDataset data = build_dataset(60, cifar_arch_config(), LeakageCase::kC, 4, DeviceProfile{});
  std::shared_ptr<SeqPredictor> seq;
  TrainedModels() {
    seq = std::make_shared<SeqPredictor>(SeqPredictor::train(data.records, LeakageCase::kC, {.tree_counts = {10, 20}}));
  }
};

const TrainedModels& models() {
  static const TrainedModels m;
  return m;
}

void BM_SeqTrain(benchmark::State& state) {
  const auto& data = models().data;
  for (auto _ : state) {
    benchmark::DoNotOptimize(SeqPredictor::train(data.records, LeakageCase::kC, {.tree_counts = {10}}));
  }
}
BENCHMARK(BM_SeqTrain)->Unit(benchmark::kMillisecond);

void BM_SeqPredict(benchmark::State& state) {
  const Trace t = profile_graph(make_fixture("resnet32").graph, {}, LeakageCase::kC, DeviceProfile{});
  const SeqPredictor& seq = *models().seq;
  for (auto _ : state) benchmark::DoNotOptimize(seq.predict(t, 0));
}
BENCHMARK(BM_SeqPredict);

void BM_Fitness(benchmark::State& state) {
  const Graph g = strip_weights(make_fixture("resnet20").graph);
  Evaluator ev;
  ev.seq = models().seq;
  const double clean = clean_latency(g, ev.device);
  const SearchSpace s = search_space(g, PlanMode::kSequence);
  Rng rng(5);
  const ObfuscationPlan plan = s.decode(random_genome(s.gene_sizes(), 0.1, rng));
  for (auto _ : state) benchmark::DoNotOptimize(fitness(plan, g, ev, 0.05, clean, 3e-4));
}
BENCHMARK(BM_Fitness)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace traceobf

BENCHMARK_MAIN();
