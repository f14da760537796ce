// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "traceobf/error.hpp"
#include "traceobf/fixtures.hpp"
#include "traceobf/graph_io.hpp"
#include "traceobf/interpreter.hpp"
#include "traceobf/transforms.hpp"
#include "test_graphs.hpp"

namespace traceobf {
namespace {

using testing::Knob;

class ConvPairTest : public ::testing::Test {
 protected:
  Graph g = make_fixture("conv_pair", 17).graph;
  std::vector<int> layers = complex_layers(g);
  int first = layers[0];   // 3 -> 64
  int second = layers[1];  // 64 -> 128, BatchNorm + ReLU

  void expect_equivalent(const Graph& t) {
    EXPECT_TRUE(validate(t).empty());
    const EquivalenceResult r = equivalence_check(g, t, 2, 5);
    EXPECT_TRUE(r.equivalent) << "max diff " << r.max_abs_rel_diff;
  }
  ErrorCode code_of(const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::kPrecondition;
  }
};

TEST_F(ConvPairTest, WideningGrowsChannelsAndRescalesTheConsumer) {
  const Graph t = widen_layer(g, second, 1.25);
  EXPECT_EQ(t.node(second).attrs.out_channels, 160);
  EXPECT_EQ(t.node(layers[3]).attrs.in_channels, 160);
  EXPECT_EQ(t.size(), g.size());
  expect_equivalent(t);
  EXPECT_EQ(g.node(second).attrs.out_channels, 128);  // input untouched
}

TEST_F(ConvPairTest, WideningWithoutAUniqueConsumerFails) {
  const Graph r = make_fixture("resnet20").graph;
  int residual_tail = -1;
  for (int id : complex_layers(r)) {
    if (!is_widenable(r, id) && r.node(id).kind == OpKind::kConv2D) residual_tail = id;
  }
  ASSERT_GE(residual_tail, 0);
  EXPECT_EQ(code_of([&] { widen_layer(r, residual_tail, 1.5); }), ErrorCode::kNotWidenable);
}

TEST_F(ConvPairTest, OutputBranchingConcatenatesSubLayers) {
  const Graph t = branch_layer(g, second, BranchAxis::kOutput, 4);
  int convs = 0;
  int concats = 0;
  for (const auto& [id, n] : t.nodes()) {
    convs += n.kind == OpKind::kConv2D;
    concats += n.kind == OpKind::kConcat;
  }
  EXPECT_EQ(convs, 3 - 1 + 4);
  EXPECT_EQ(concats, 1);
  expect_equivalent(t);
}

TEST_F(ConvPairTest, InputBranchingSumsSlices) {
  const Graph t = branch_layer(g, second, BranchAxis::kInput, 2);
  int slices = 0;
  for (const auto& [id, n] : t.nodes()) slices += n.kind == OpKind::kSlice;
  EXPECT_EQ(slices, 2);
  expect_equivalent(t);
  EXPECT_FALSE(is_branchable(g, first, BranchAxis::kInput, 2));  // c = 3
  EXPECT_EQ(code_of([&] { branch_layer(g, first, BranchAxis::kInput, 4); }), ErrorCode::kNotDivisible);
}

TEST_F(ConvPairTest, DummyAdditionsAreZero) {
  const Graph t = add_dummy(g, second, 3);
  EXPECT_EQ(t.size(), g.size() + 3);
  expect_equivalent(t);
}

TEST_F(ConvPairTest, IdentityDeepeningPreservesFunctionAndTheLiteralKernelDoesNot) {
  const Graph good = deepen_layer(g, second, DeepenKernel::kChannelIdentity);
  EXPECT_EQ(good.size(), g.size() + 2);
  expect_equivalent(good);
  const Graph bad = deepen_layer(g, second, DeepenKernel::kCenterZeroed);
  EXPECT_FALSE(equivalence_check(g, bad, 2, 5).equivalent);
}

TEST_F(ConvPairTest, DeepeningNeedsAReLU) {
  EXPECT_TRUE(has_relu_activation(g, second));
  const int classifier = layers[layers.size() - 2];  // Linear feeding SoftMax
  EXPECT_FALSE(has_relu_activation(g, classifier));
  EXPECT_EQ(code_of([&] { deepen_layer(g, classifier); }), ErrorCode::kNoActivation);
}

TEST_F(ConvPairTest, SkipAddsAZeroConvolution) {
  const Graph t = skip_layer(g, second);
  EXPECT_EQ(t.size(), g.size() + 2);
  expect_equivalent(t);
}

TEST_F(ConvPairTest, KernelWideningPadsWithZeros) {
  const Graph t = widen_kernel(g, second, 2);
  EXPECT_EQ(t.node(second).attrs.k1, 7);
  EXPECT_EQ(t.node(second).attrs.k2, 7);
  expect_equivalent(t);
}

TEST_F(ConvPairTest, StructureOnlyGraphsTransformWithoutWeights) {
  const Graph bare = make_fixture("conv_pair").graph;
  const Graph t = branch_layer(widen_layer(bare, first, 1.5), second, BranchAxis::kOutput, 2);
  EXPECT_TRUE(validate(t, {.require_weights = false}).empty());
  EXPECT_FALSE(t.has_all_weights());
}

TEST_F(ConvPairTest, PlanErrorListsEveryFailedKnob) {
  ObfuscationPlan plan = identity_plan(g, PlanMode::kSequence);
  plan.entries[0].branching = Branching::kIn4;
  plan.entries[plan.entries.size() - 2].deepen = 1;
  try {
    apply_plan(g, plan);
    FAIL();
  } catch (const PlanError& e) {
    ASSERT_EQ(e.failures().size(), 2u);
    EXPECT_EQ(e.failures()[0].knob, "branching");
    EXPECT_EQ(e.failures()[1].knob, "deepen");
  }
  ObfuscationPlan stray = identity_plan(g, PlanMode::kSequence);
  stray.entries[0].layer_id = 1;  // a ReLU
  EXPECT_THROW(apply_plan(g, stray), PlanError);
}

TEST_F(ConvPairTest, PlanHintsFollowBackendKnobs) {
  ObfuscationPlan plan = identity_plan(g, PlanMode::kDimension);
  plan.entries[1].fusion_limit = 0;
  plan.entries[1].schedule_strategy = 2;
  const PlannedGraph pg = apply_plan(g, plan);
  EXPECT_EQ(pg.hints.fusion_limits.at(second), 0);
  EXPECT_EQ(pg.hints.schedule_strategies.at(second), 2);
  EXPECT_EQ(encode_graph(pg.graph, "").text, encode_graph(infer_shapes(g), "").text);
}

TEST(TransformPropertyTest, EachKnobAloneAndCombinedPreservesFunction) {
  Rng rng(2026);
  std::map<Knob, int> applied;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Graph g = testing::random_small_graph(seed);
    const testing::KnobDomains dom(g);
    for (Knob k : testing::kAllKnobs) {
      ObfuscationPlan plan = testing::random_plan(g, dom, {k}, 0.6, rng);
      const PlannedGraph pg = testing::apply_repairing(g, plan);
      applied[k] += testing::touches(plan, k);
      const EquivalenceResult r = equivalence_check(g, pg.graph, 2, seed);
      EXPECT_TRUE(r.equivalent) << "seed " << seed << " knob " << testing::knob_name(k) << " diff "
                                << r.max_abs_rel_diff;
    }
    ObfuscationPlan all = testing::random_plan(
        g, dom, std::vector<Knob>(std::begin(testing::kAllKnobs), std::end(testing::kAllKnobs)), 0.6, rng);
    const PlannedGraph pg = testing::apply_repairing(g, all);
    EXPECT_TRUE(equivalence_check(g, pg.graph, 2, seed).equivalent) << "seed " << seed << " combined";
  }
  for (Knob k : testing::kAllKnobs) EXPECT_GT(applied[k], 0) << testing::knob_name(k);
}

}  // namespace
}  // namespace traceobf
