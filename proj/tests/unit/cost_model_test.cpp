// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <numeric>

#include <gtest/gtest.h>

#include "traceobf/backend.hpp"
#include "traceobf/builder.hpp"
#include "traceobf/error.hpp"
#include "traceobf/fixtures.hpp"
#include "traceobf/transforms.hpp"

namespace traceobf {
namespace {

Workload conv_work(int c, int j, int hw, int k = 3) {
  GraphBuilder b({1, c, hw, hw});
  const Graph g = infer_shapes(b.finish(b.conv(GraphBuilder::kInput, j, k)));
  return kernel_workload(g, Kernel{0, {0}, 0, false});
}

TEST(CostModelTest, ConvolutionWorkloadCountsMacsAndBytes) {
  const Workload w = conv_work(16, 32, 8);
  EXPECT_EQ(w.kind, OpKind::kConv2D);
  EXPECT_TRUE(w.reducing);
  EXPECT_EQ(w.y, 32);
  EXPECT_EQ(w.x, 64);
  EXPECT_EQ(w.r, 16 * 9);
  EXPECT_EQ(w.macs, 32LL * 64 * 16 * 9);
  EXPECT_EQ(w.weight_bytes, 4LL * 9 * 16 * 32);
  EXPECT_EQ(w.output_bytes, 4LL * 32 * 64);
}

TEST(CostModelTest, CountersAreDeterministicAndWellFormed) {
  const DeviceProfile d;
  for (const std::string& name : fixture_names()) {
    const CompiledModel m = compile(make_fixture(name).graph, {}, d);
    const Trace a = profile(m, LeakageCase::kC, d);
    const Trace b = profile(m, LeakageCase::kC, d);
    ASSERT_EQ(a.steps.size(), m.kernels.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
      EXPECT_EQ(a.steps[i].features, b.steps[i].features);
      EXPECT_GE(a.steps[i].cycles(), d.launch_overhead);
      EXPECT_GE(a.steps[i].l1_hit(), 0.0);
      EXPECT_LE(a.steps[i].l1_hit(), 100.0);
      EXPECT_GE(a.steps[i].l2_hit(), 0.0);
      EXPECT_LE(a.steps[i].l2_hit(), 100.0);
      EXPECT_EQ(a.steps[i].anchor, m.kernels[i].anchor());
      sum += a.steps[i].cycles();
    }
    EXPECT_DOUBLE_EQ(a.total_latency, sum);
  }
}

TEST(CostModelTest, MaskingKeepsOnlyTheCaseFeatures) {
  const DeviceProfile d;
  const CompiledModel m = compile(make_fixture("conv_pair").graph, {}, d);
  for (LeakageCase c : {LeakageCase::kA, LeakageCase::kB, LeakageCase::kC}) {
    const Trace t = profile(m, c, d);
    const std::size_t visible = case_feature_count(c);
    for (const TraceStep& s : t.steps) {
      for (std::size_t f = 0; f < 9; ++f) {
        if (f >= visible) { EXPECT_EQ(s.features[f], 0.0); }
      }
      EXPECT_GT(s.cycles(), 0.0);
    }
  }
  EXPECT_EQ(case_feature_count(LeakageCase::kA), 1u);
  EXPECT_EQ(case_feature_count(LeakageCase::kB), 3u);
  EXPECT_EQ(case_feature_count(LeakageCase::kC), 9u);
}

TEST(CostModelTest, LatencyGrowsWithWork) {
  const DeviceProfile d;
  double prev = 0.0;
  for (int j : {16, 32, 64, 128, 256}) {
    const Workload w = conv_work(64, j, 16);
    const double cycles = profile_kernel(w, default_schedule(w, d), d).cycles();
    EXPECT_GT(cycles, prev);
    prev = cycles;
  }
  const TraceStep empty = profile_kernel(Workload{}, Schedule{}, d);
  for (double v : empty.features) EXPECT_EQ(v, 0.0);
}

TEST(CostModelTest, FusedKernelIsFasterThanItsParts) {
  const DeviceProfile d;
  const Graph g = make_fixture("conv_pair").graph;
  const int layer = complex_layers(g)[1];
  const Trace fused = profile_graph(g, {}, LeakageCase::kA, d);
  BackendHints split;
  split.fusion_limits[layer] = 0;
  const Trace unfused = profile_graph(g, split, LeakageCase::kA, d);
  ASSERT_EQ(unfused.steps.size(), fused.steps.size() + 2);
  const double parts = unfused.steps[1].cycles() + unfused.steps[2].cycles() + unfused.steps[3].cycles();
  EXPECT_LT(fused.steps[1].cycles(), parts);
}

TEST(CostModelTest, DefaultScheduleIsTheCachedMinimum) {
  const DeviceProfile d;
  clear_schedule_cache();
  const Workload w = conv_work(32, 64, 16);
  const Schedule best = default_schedule(w, d);
  EXPECT_EQ(schedule_cache_size(), 1u);
  EXPECT_EQ(default_schedule(w, d), best);
  EXPECT_EQ(schedule_cache_size(), 1u);
  const double c = profile_kernel(w, best, d).cycles();
  for (const Triple& y : candidate_triples(w.y)) {
    for (const Triple& x : candidate_triples(w.x)) {
      for (int u : kUnrollDepths) EXPECT_GE(profile_kernel(w, {y, x, u, 0}, d).cycles(), c);
    }
  }
}

TEST(CostModelTest, DeviceProfilesRoundTripThroughJson) {
  for (const std::string& name : builtin_device_names()) {
    const DeviceProfile d = builtin_device(name);
    EXPECT_EQ(device_from_json(device_to_json(d)), d);
  }
  const DeviceProfile tweaked = device_from_json(R"({"base": "sim-ampere", "launch_overhead": 10})");
  EXPECT_EQ(tweaked.launch_overhead, 10.0);
  EXPECT_EQ(tweaked.num_sms, builtin_device("sim-ampere").num_sms);
  EXPECT_THROW(builtin_device("sim-pascal"), Error);
  EXPECT_THROW(device_from_json("{"), Error);
}

TEST(CostModelTest, FasterDeviceRunsFixturesFaster) {
  for (const char* name : {"resnet20", "vgg11"}) {
    const Graph g = make_fixture(name).graph;
    EXPECT_LT(profile_graph(g, {}, LeakageCase::kA, builtin_device("sim-ampere")).total_latency,
              profile_graph(g, {}, LeakageCase::kA, builtin_device("sim-turing")).total_latency);
  }
}

}  // namespace
}  // namespace traceobf
