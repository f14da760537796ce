// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "text_util.hpp"
#include "traceobf/error.hpp"
#include "traceobf/forest.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {
namespace {

struct Sample {
  Dataset2D x;
  std::vector<double> y;
};

// Two informative features and one noise column.
Sample make_sample(std::size_t n, bool classify, std::uint64_t seed) {
  Rng rng(seed);
  Sample s;
  s.x.cols = 3;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1);
    const double b = rng.uniform(-1, 1);
    s.x.push_row({a, b, rng.uniform()});
    s.y.push_back(classify ? (a > 0 ? 1.0 : 0.0) + (b > 0.5 ? 1.0 : 0.0) : 3.0 * a + b * b);
  }
  return s;
}

RandomForest decode_text(const std::string& text) {
  const auto lines = detail::lines(text);
  std::size_t pos = 0;
  RandomForest f = RandomForest::decode(lines, pos, "<forest>");
  EXPECT_EQ(pos, lines.size());
  return f;
}

TEST(ForestTest, ClassifierLearnsAxisAlignedRule) {
  const Sample train = make_sample(600, true, 1);
  const Sample test = make_sample(200, true, 2);
  const RandomForest f = RandomForest::fit(
      train.x, train.y, {.task = TreeTask::kClassification, .trees = 20, .max_depth = 8, .num_classes = 3, .seed = 4});
  EXPECT_EQ(f.tree_count(), 20u);
  int correct = 0;
  for (std::size_t i = 0; i < test.x.rows(); ++i) correct += f.predict(test.x.row(i)) == test.y[i];
  EXPECT_GT(correct, 190);
}

TEST(ForestTest, RegressorApproximatesSmoothTarget) {
  const Sample train = make_sample(800, false, 5);
  const Sample test = make_sample(200, false, 6);
  const RandomForest f = RandomForest::fit(train.x, train.y, {.trees = 30, .max_depth = 10, .seed = 7});
  double se = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < test.x.rows(); ++i) {
    se += std::pow(f.predict(test.x.row(i)) - test.y[i], 2);
    var += test.y[i] * test.y[i];
  }
  EXPECT_LT(se / var, 0.05);
}

TEST(ForestTest, FittingIsSeededAndTreesRespectDepth) {
  const Sample s = make_sample(300, false, 8);
  const ForestParams p{.trees = 5, .max_depth = 4, .seed = 9};
  const RandomForest a = RandomForest::fit(s.x, s.y, p);
  EXPECT_EQ(a.encode(), RandomForest::fit(s.x, s.y, p).encode());
  EXPECT_NE(a.encode(), RandomForest::fit(s.x, s.y, {.trees = 5, .max_depth = 4, .seed = 10}).encode());
  for (const DecisionTree& t : a.trees()) EXPECT_LE(t.depth(), 4);
}

TEST(ForestTest, EncodingRoundTripsExactly) {
  for (bool classify : {false, true}) {
    const Sample s = make_sample(200, classify, 11);
    ForestParams p{.trees = 4, .max_depth = 6, .seed = 12};
    if (classify) {
      p.task = TreeTask::kClassification;
      p.num_classes = 3;
    }
    const RandomForest f = RandomForest::fit(s.x, s.y, p);
    const RandomForest back = decode_text(f.encode());
    EXPECT_EQ(back.encode(), f.encode());
    EXPECT_EQ(back.task(), f.task());
    for (std::size_t i = 0; i < s.x.rows(); ++i) EXPECT_EQ(back.predict(s.x.row(i)), f.predict(s.x.row(i)));
  }
}

TEST(ForestTest, EmptyDatasetIsRejected) {
  Dataset2D x;
  x.cols = 2;
  try {
    RandomForest::fit(x, {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyDataset);
  }
}

}  // namespace
}  // namespace traceobf
