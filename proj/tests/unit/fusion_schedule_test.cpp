// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "traceobf/builder.hpp"
#include "traceobf/error.hpp"
#include "traceobf/fixtures.hpp"
#include "traceobf/fusion.hpp"
#include "traceobf/rng.hpp"
#include "traceobf/schedule.hpp"
#include "traceobf/transforms.hpp"
#include "test_graphs.hpp"

namespace traceobf {
namespace {

TEST(FusionTest, ConvBatchNormReLUFuseIntoOneKernel) {
  const Graph g = infer_shapes(make_fixture("conv_pair").graph);
  const std::vector<Kernel> k = fuse(g);
  ASSERT_EQ(k.size(), 7u);
  const int second = complex_layers(g)[1];
  const Kernel& conv = k[1];
  EXPECT_EQ(conv.anchor(), second);
  EXPECT_EQ(conv.nodes.size(), 3u);
  EXPECT_EQ(conv.fused_count, 2);
  EXPECT_EQ(g.node(conv.nodes[1]).kind, OpKind::kBatchNorm);
  EXPECT_EQ(g.node(conv.nodes[2]).kind, OpKind::kReLU);
}

TEST(FusionTest, LimitsCapAbsorbedOperators) {
  const Graph g = infer_shapes(make_fixture("conv_pair").graph);
  const int second = complex_layers(g)[1];
  EXPECT_EQ(fuse(g, {{second, 0}}).size(), 9u);
  const std::vector<Kernel> one = fuse(g, {{second, 1}});
  ASSERT_EQ(one.size(), 8u);
  EXPECT_EQ(one[1].nodes.size(), 2u);
  EXPECT_EQ(g.node(one[2].anchor()).kind, OpKind::kReLU);
}

TEST(FusionTest, EveryNodeIssuesExactlyOnceInTopologicalOrder) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Graph g = infer_shapes(testing::random_small_graph(seed, false));
    FusionLimits limits;
    Rng rng(seed);
    for (int id : complex_layers(g)) {
      if (rng.bernoulli(0.3)) limits[id] = static_cast<int>(rng.uniform_int(0, 2));
    }
    const std::vector<Kernel> kernels = fuse(g, limits);
    std::set<int> seen;
    std::map<int, std::size_t> kernel_of;
    for (const Kernel& k : kernels) {
      EXPECT_EQ(k.index, static_cast<int>(&k - kernels.data()));
      EXPECT_EQ(k.fused_count, static_cast<int>(k.nodes.size()) - 1);
      if (auto it = limits.find(k.anchor()); it != limits.end()) { EXPECT_LE(k.fused_count, it->second); }
      for (std::size_t i = 0; i < k.nodes.size(); ++i) {
        EXPECT_TRUE(seen.insert(k.nodes[i]).second);
        kernel_of[k.nodes[i]] = static_cast<std::size_t>(k.index);
        if (i > 0) { EXPECT_TRUE(is_injective(g.node(k.nodes[i]).kind)); }
      }
    }
    EXPECT_EQ(seen.size(), g.size());
    for (const auto& [id, n] : g.nodes()) {
      for (int in : n.inputs) EXPECT_LE(kernel_of[in], kernel_of[id]);
    }
  }
}

TEST(FusionTest, ConcatAndSliceStandAlone) {
  const Graph base = make_fixture("conv_pair").graph;
  const Graph g = infer_shapes(branch_layer(base, complex_layers(base)[1], BranchAxis::kInput, 2));
  for (const Kernel& k : fuse(g)) {
    const OpKind a = g.node(k.anchor()).kind;
    if (a == OpKind::kSlice || a == OpKind::kConcat) { EXPECT_EQ(k.nodes.size(), 1u); }
  }
}

TEST(ScheduleTest, StrategyOneWorkedExample) {
  const Schedule s{{4, 8, 4}, {2, 4, 2}, 2, 0};
  const Schedule m = modify_schedule(s, 1);
  EXPECT_EQ(format_triple(m.tile_y), "[-1,1,8,16]");
  EXPECT_EQ(format_triple(m.tile_x), "[-1,1,4,4]");
  EXPECT_EQ(m.unroll, 2);
  EXPECT_EQ(m.strategy, 1);
  EXPECT_EQ(modify_schedule(s, 0), s);
}

TEST(ScheduleTest, StrategiesPreserveProductsAndZeroTheirFactor) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    Schedule s;
    for (int i = 0; i < 3; ++i) {
      s.tile_y[i] = kTileFactors[rng.index(kTileFactors.size())];
      s.tile_x[i] = kTileFactors[rng.index(kTileFactors.size())];
    }
    for (int k = 1; k <= kMaxStrategy; ++k) {
      const Schedule m = modify_schedule(s, k);
      EXPECT_EQ(triple_product(m.tile_y), triple_product(s.tile_y));
      EXPECT_EQ(triple_product(m.tile_x), triple_product(s.tile_x));
      EXPECT_EQ(m.tile_y[k - 1], 1);
      EXPECT_EQ(m.tile_x[k - 1], 1);
    }
  }
}

TEST(ScheduleTest, InvalidStrategyIsRejected) {
  try {
    modify_schedule(Schedule{}, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidStrategy);
  }
  EXPECT_THROW(modify_schedule(Schedule{}, -1), Error);
}

TEST(ScheduleTest, HelpersMatchTheirContracts) {
  EXPECT_EQ(next_pow2(1), 1);
  EXPECT_EQ(next_pow2(5), 8);
  EXPECT_EQ(next_pow2(64), 64);
  EXPECT_EQ(balanced_split(128), (std::array<int, 2>{8, 16}));
  EXPECT_EQ(balanced_split(12), (std::array<int, 2>{3, 4}));
  EXPECT_EQ(balanced_split(1), (std::array<int, 2>{1, 1}));
  const std::vector<Triple> c = candidate_triples(10);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
  for (const Triple& t : c) EXPECT_LE(triple_product(t), 16);
  EXPECT_EQ(c.front(), (Triple{1, 1, 1}));
  EXPECT_NE(std::find(c.begin(), c.end(), Triple{16, 1, 1}), c.end());
  EXPECT_EQ(std::find(c.begin(), c.end(), Triple{32, 1, 1}), c.end());
}

}  // namespace
}  // namespace traceobf
