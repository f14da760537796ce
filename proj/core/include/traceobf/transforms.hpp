// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Function-preserving graph rewrites applied at the scripting level. Every
// rewrite returns a new graph with shapes inferred; the input is untouched.
// When the input graph carries no weights the rewrites act on structure only.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "traceobf/error.hpp"
#include "traceobf/graph.hpp"
#include "traceobf/plan.hpp"

namespace traceobf {

// Grows output channels j -> round(factor * j) by duplicating the first
// channels and rescales the unique downstream Conv2D/Linear so its output is
// unchanged. Throws kNotWidenable when that consumer cannot be co-adjusted.
Graph widen_layer(const Graph& graph, int layer_id, double factor);

enum class BranchAxis { kInput, kOutput };

// Output axis: `parts` sub-layers over j plus a Concat. Input axis: channel
// Slices feeding sub-layers over c, summed by Add nodes. Throws kNotDivisible.
Graph branch_layer(const Graph& graph, int layer_id, BranchAxis axis, int parts);

// Appends `count` Add nodes with an all-zero constant after the layer's
// activation.
Graph add_dummy(const Graph& graph, int layer_id, int count);

enum class DeepenKernel {
  kChannelIdentity,  // 1 where d == m, else 0
  kCenterZeroed,     // 0 where d == m, else 1; not function-preserving
};

// Inserts a 1x1 Conv2D + ReLU after the layer's ReLU. Throws kNoActivation.
Graph deepen_layer(const Graph& graph, int layer_id,
                   DeepenKernel kernel = DeepenKernel::kChannelIdentity);

// Adds a zero-weight 1x1 Conv2D on the layer's activation and sums it back in.
Graph skip_layer(const Graph& graph, int layer_id);

// Pads a Conv2D kernel by `steps` zeros per side and its input by the same.
Graph widen_kernel(const Graph& graph, int layer_id, int steps);

bool is_widenable(const Graph& graph, int layer_id);
bool has_relu_activation(const Graph& graph, int layer_id);
bool is_branchable(const Graph& graph, int layer_id, BranchAxis axis, int parts);

// Hints consumed by the backend, keyed by node id in the obfuscated graph.
struct BackendHints {
  std::map<int, int> fusion_limits;
  std::map<int, int> schedule_strategies;
};

struct PlannedGraph {
  Graph graph;
  BackendHints hints;
};

struct KnobFailure {
  int layer_id;
  std::string knob;
  std::string message;
};

class PlanError : public Error {
 public:
  explicit PlanError(std::vector<KnobFailure> failures);
  const std::vector<KnobFailure>& failures() const { return failures_; }

 private:
  std::vector<KnobFailure> failures_;
};

// Applies knobs to the vanilla layers named in `plan`, one knob at a time
// over all layers: widening, kernel widening, branching, deepening,
// skipping, dummy addition. Knobs are never applied to nodes created by an
// earlier knob. Throws PlanError listing every failed knob.
PlannedGraph apply_plan(const Graph& vanilla, const ObfuscationPlan& plan);

}  // namespace traceobf
