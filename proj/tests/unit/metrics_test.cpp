// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <gtest/gtest.h>

#include "traceobf/error.hpp"
#include "traceobf/metrics.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {
namespace {

constexpr OpKind C = OpKind::kConv2D;
constexpr OpKind L = OpKind::kLinear;
constexpr OpKind P = OpKind::kMaxPool;
constexpr OpKind S = OpKind::kSoftMax;

std::vector<OpKind> random_seq(Rng& rng, std::size_t max_len) {
  static constexpr OpKind kinds[] = {C, L, P, S};
  std::vector<OpKind> s(rng.index(max_len + 1));
  for (OpKind& k : s) k = kinds[rng.index(4)];
  return s;
}

// Row-by-row dynamic program kept independent of the library version.
std::size_t oracle_distance(const std::vector<OpKind>& a, const std::vector<OpKind>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

TEST(MetricsTest, LevenshteinSmallCases) {
  EXPECT_EQ(levenshtein({}, {}), 0u);
  EXPECT_EQ(levenshtein({C, C, P}, {}), 3u);
  EXPECT_EQ(levenshtein({C, P, L}, {C, L}), 1u);
  EXPECT_EQ(levenshtein({C, P, L, S}, {P, C, L, S}), 2u);
}

TEST(MetricsTest, LevenshteinMatchesOracleAndIsAMetric) {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto a = random_seq(rng, 12);
    const auto b = random_seq(rng, 12);
    const auto c = random_seq(rng, 12);
    const std::size_t ab = levenshtein(a, b);
    EXPECT_EQ(ab, oracle_distance(a, b));
    EXPECT_EQ(ab, levenshtein(b, a));
    EXPECT_LE(levenshtein(a, c), ab + levenshtein(b, c));
    EXPECT_LE(ab, std::max(a.size(), b.size()));
    EXPECT_GE(ab, a.size() > b.size() ? a.size() - b.size() : b.size() - a.size());
  }
}

TEST(MetricsTest, LerNormalisesByTruthLength) {
  // 44 edits against an 18-layer truth.
  LabelSequence truth{std::vector<OpKind>(18, C)};
  LabelSequence pred{std::vector<OpKind>(18, L)};
  pred.labels.insert(pred.labels.end(), 26, P);
  EXPECT_EQ(levenshtein(pred.labels, truth.labels), 44u);
  EXPECT_NEAR(ler(pred, truth), 44.0 / 18.0, 1e-12);
  EXPECT_NEAR(ler(pred, truth), 2.4444, 1e-4);
  EXPECT_EQ(ler(truth, truth), 0.0);
  EXPECT_EQ(ler(LabelSequence{}, truth), 1.0);
  try {
    ler(pred, LabelSequence{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyTruth);
  }
}

TEST(MetricsTest, DerSumsNormalisedChannelErrors) {
  const Dims truth{64, 128};
  EXPECT_NEAR(der({207, 93}, truth), 2.5078, 1e-4);
  EXPECT_NEAR(der({177, 91}, truth), 2.0547, 1e-4);
  EXPECT_NEAR(der({225, 92}, truth), 2.7969, 1e-4);
  EXPECT_EQ(der(truth, truth), 0.0);
  EXPECT_NEAR(der({32, 256}, truth), 1.5, 1e-12);
  try {
    der({1, 1}, {0, 4});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroTruth);
  }
}

}  // namespace
}  // namespace traceobf
