// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <vector>

#include "traceobf/graph.hpp"

namespace traceobf {

// Number of absorbed operators after which a kernel stops accepting
// constant-operand additions.
inline constexpr int kFusionSaturation = 2;

// One issued kernel: nodes[0] is the anchor, the rest are injective operators
// fused into it in execution order.
struct Kernel {
  int index = 0;
  std::vector<int> nodes;
  int fused_count = 0;
  bool fusion_saturated = false;

  int anchor() const { return nodes.front(); }
  friend bool operator==(const Kernel&, const Kernel&) = default;
};

// Maps anchor node id to the number of injective operators it may absorb.
// Absent entries are unlimited.
using FusionLimits = std::map<int, int>;

// Greedy forward fusion in topological order. An injective node joins the
// kernel of its latest input when that input ends a complex-anchored kernel,
// has no other consumer, every other operand is computed by an earlier
// kernel, and the anchor's limit allows another operator.
// Concat and Slice always issue as their own kernels.
std::vector<Kernel> fuse(const Graph& graph, const FusionLimits& limits = {});

}  // namespace traceobf
