// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "traceobf/builder.hpp"
#include "traceobf/error.hpp"
#include "traceobf/interpreter.hpp"
#include "test_graphs.hpp"

namespace traceobf {
namespace {

TEST(InterpreterTest, ConvolutionMatchesDirectSum) {
  GraphBuilder b({1, 2, 4, 4});
  const int c = b.conv(GraphBuilder::kInput, 3, 3);
  Graph g = b.finish(c);
  randomize_weights(g, 4);
  const Tensor x = random_normal_tensor({1, 2, 4, 4}, 9);
  const Tensor y = execute(g, x);
  const std::vector<float>& w = *g.node(c).weights;
  // Weights are (k1, k2, c, j) row-major with padding 1.
  for (int j = 0; j < 3; ++j) {
    for (int h = 0; h < 4; ++h) {
      for (int v = 0; v < 4; ++v) {
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
          for (int bb = 0; bb < 3; ++bb) {
            const int ih = h + a - 1;
            const int iw = v + bb - 1;
            if (ih < 0 || ih >= 4 || iw < 0 || iw >= 4) continue;
            for (int ci = 0; ci < 2; ++ci) acc += w[((a * 3 + bb) * 2 + ci) * 3 + j] * x.at(0, ci, ih, iw);
          }
        }
        EXPECT_NEAR(y.at(0, j, h, v), acc, 1e-9);
      }
    }
  }
}

TEST(InterpreterTest, SoftMaxNormalisesAndPoolTakesMaximum) {
  GraphBuilder b({1, 3, 4, 4});
  const int p = b.global_pool(GraphBuilder::kInput);
  Graph g = b.finish(b.softmax(b.linear(p, 5)));
  randomize_weights(g, 1);
  const Tensor y = execute(g, random_normal_tensor({1, 3, 4, 4}, 2));
  ASSERT_EQ(y.shape, (TensorShape{1, 5, 1, 1}));
  EXPECT_NEAR(std::accumulate(y.data.begin(), y.data.end(), 0.0), 1.0, 1e-12);
  for (double v : y.data) EXPECT_GT(v, 0.0);

  GraphBuilder pb({1, 1, 2, 2});
  const Graph pool = pb.finish(pb.maxpool(GraphBuilder::kInput, 2, 2));
  const Tensor out = execute(pool, Tensor({1, 1, 2, 2}, {0.5, -1.0, 3.0, 2.0}));
  EXPECT_EQ(out.data, std::vector<double>{3.0});
}

TEST(InterpreterTest, SliceConcatAndAddCompose) {
  GraphBuilder b({1, 4, 2, 2});
  const int lo = b.slice(GraphBuilder::kInput, 0, 2);
  const int hi = b.slice(GraphBuilder::kInput, 2, 4);
  const int cat = b.concat({lo, hi});
  const Graph g = b.finish(b.add(cat, cat));
  const Tensor x = random_normal_tensor({1, 4, 2, 2}, 3);
  const Tensor y = execute(g, x);
  for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_DOUBLE_EQ(y.data[i], 2.0 * x.data[i]);
}

TEST(InterpreterTest, RejectsWrongInputShape) {
  Graph g = testing::random_small_graph(1);
  try {
    execute(g, Tensor({1, 17, 3, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(InterpreterTest, EquivalenceCheckSeparatesDifferentWeights) {
  const Graph a = testing::random_small_graph(7);
  const EquivalenceResult same = equivalence_check(a, a, 3, 1);
  EXPECT_TRUE(same.equivalent);
  EXPECT_EQ(same.max_abs_rel_diff, 0.0);
  Graph b = a;
  randomize_weights(b, 1234);
  EXPECT_FALSE(equivalence_check(a, b, 3, 1).equivalent);
}

TEST(InterpreterTest, ExecutionIsDeterministic) {
  const Graph g = testing::random_small_graph(21);
  const Tensor x = random_normal_tensor(g.input_shape(), 5);
  EXPECT_EQ(execute(g, x).data, execute(g, x).data);
  EXPECT_EQ(random_normal_tensor(g.input_shape(), 5).data, x.data);
}

}  // namespace
}  // namespace traceobf
