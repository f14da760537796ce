// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "traceobf/graph.hpp"

namespace traceobf {

// Unit-cost insert/delete/substitute edit distance.
std::size_t levenshtein(const std::vector<OpKind>& a, const std::vector<OpKind>& b);

// Edit distance normalised by the truth length. Throws Error(kEmptyTruth).
double ler(const LabelSequence& pred, const LabelSequence& truth);

struct Dims {
  int c = 0;
  int j = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

// |c - c*| / c* + |j - j*| / j*. Throws Error(kZeroTruth) when c* or j* < 1.
double der(const Dims& pred, const Dims& truth);

}  // namespace traceobf
