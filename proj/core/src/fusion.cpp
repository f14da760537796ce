// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/fusion.hpp"

namespace traceobf {

std::vector<Kernel> fuse(const Graph& graph, const FusionLimits& limits) {
  const std::vector<int> order = topo_order(graph);
  std::map<int, int> position;
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = static_cast<int>(i);
  std::map<int, std::size_t> owner;  // node id -> kernel index
  std::vector<Kernel> kernels;

  auto open_kernel = [&](int id) {
    Kernel k;
    k.index = static_cast<int>(kernels.size());
    k.nodes = {id};
    owner[id] = kernels.size();
    kernels.push_back(std::move(k));
  };

  for (int id : order) {
    const Node& n = graph.node(id);
    if (!is_injective(n.kind) || n.inputs.empty()) {
      open_kernel(id);
      continue;
    }
    int pred = n.inputs[0];
    for (int in : n.inputs) {
      if (position[in] > position[pred]) pred = in;
    }
    Kernel& k = kernels[owner[pred]];
    const Node& anchor = graph.node(k.anchor());
    int limit = -1;
    if (auto it = limits.find(k.anchor()); it != limits.end()) limit = it->second;
    const bool ends_kernel = k.nodes.back() == pred;
    const bool sole_use = graph.consumers(pred).size() == 1 && pred != graph.output_id();
    const bool within_limit = limit < 0 || k.fused_count < limit;
    const bool constant_blocked = n.kind == OpKind::kAdd && n.attrs.constant && k.fusion_saturated;
    bool operands_ready = true;
    for (int in : n.inputs) operands_ready = operands_ready && owner[in] <= owner[pred];
    if (is_complex(anchor.kind) && ends_kernel && sole_use && within_limit && !constant_blocked &&
        operands_ready) {
      k.nodes.push_back(id);
      ++k.fused_count;
      if (k.fused_count >= kFusionSaturation) k.fusion_saturated = true;
      owner[id] = owner[pred];
    } else {
      open_kernel(id);
    }
  }
  return kernels;
}

}  // namespace traceobf
