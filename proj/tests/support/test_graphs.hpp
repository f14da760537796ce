// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded generators for property tests: small weighted graphs that execute
// quickly, and random plans drawn from the knob domains of a graph.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "traceobf/builder.hpp"
#include "traceobf/obfuscator.hpp"
#include "traceobf/rng.hpp"
#include "traceobf/transforms.hpp"

namespace traceobf::testing {

// 2-5 convolution blocks (plain, residual, depthwise or pooling) on a tiny
// input, a pooled classifier head, and random weights.
inline Graph random_small_graph(std::uint64_t seed, bool with_weights = true) {
  Rng rng(seed);
  static constexpr int kWidths[] = {4, 8, 16};
  const int in_c = static_cast<int>(rng.uniform_int(1, 4));
  const int hw = static_cast<int>(2 * rng.uniform_int(3, 5));
  GraphBuilder b({1, in_c, hw, hw});
  int cur = b.conv(GraphBuilder::kInput, kWidths[rng.index(3)], rng.bernoulli(0.5) ? 3 : 1);
  if (rng.bernoulli(0.5)) cur = b.batchnorm(cur);
  cur = b.relu(cur);
  const int blocks = static_cast<int>(rng.uniform_int(1, 4));
  for (int i = 0; i < blocks; ++i) {
    const int c = b.shape(cur).channels;
    switch (rng.index(4)) {
      case 0: {
        cur = b.conv(cur, kWidths[rng.index(3)], rng.bernoulli(0.5) ? 3 : 1);
        if (rng.bernoulli(0.5)) cur = b.batchnorm(cur);
        cur = b.relu(cur);
        break;
      }
      case 1: {
        int y = b.relu(b.batchnorm(b.conv(cur, c, 3)));
        y = b.batchnorm(b.conv(y, c, 3));
        cur = b.relu(b.add(y, cur));
        break;
      }
      case 2:
        cur = b.relu(b.conv(cur, c, 3, 1, -1, c));
        break;
      default:
        if (b.shape(cur).height >= 4) cur = b.maxpool(cur, 2, 2);
        break;
    }
  }
  cur = b.global_pool(cur);
  if (rng.bernoulli(0.5)) cur = b.relu(b.linear(cur, 8));
  cur = b.softmax(b.linear(cur, static_cast<int>(rng.uniform_int(3, 10))));
  Graph g = b.finish(cur);
  if (with_weights) randomize_weights(g, derive_seed(seed, 99));
  return g;
}

enum class Knob { kWiden, kKernelWiden, kBranching, kDeepen, kSkip, kDummy };
inline constexpr Knob kAllKnobs[] = {Knob::kWiden, Knob::kKernelWiden, Knob::kBranching,
                                     Knob::kDeepen, Knob::kSkip, Knob::kDummy};

inline std::string knob_name(Knob k) {
  switch (k) {
    case Knob::kWiden: return "widen";
    case Knob::kKernelWiden: return "kernel_widen";
    case Knob::kBranching: return "branching";
    case Knob::kDeepen: return "deepen";
    case Knob::kSkip: return "skip";
    case Knob::kDummy: return "dummy";
  }
  return "";
}

// Domain of every knob on every complex layer, taken from both search spaces.
struct KnobDomains {
  SearchSpace seq;
  SearchSpace dim;
  explicit KnobDomains(const Graph& g)
      : seq(search_space(g, PlanMode::kSequence)), dim(search_space(g, PlanMode::kDimension)) {}
  std::size_t layers() const { return seq.layers.size(); }
  std::size_t options(std::size_t layer, Knob k) const {
    const LayerDomain& s = seq.layers[layer];
    const LayerDomain& d = dim.layers[layer];
    switch (k) {
      case Knob::kWiden: return d.widen.size();
      case Knob::kKernelWiden: return d.kernel_widen.size();
      case Knob::kBranching: return s.branching.size();
      case Knob::kDeepen: return s.deepen.size();
      case Knob::kSkip: return s.skip.size();
      case Knob::kDummy: return d.dummy.size();
    }
    return 1;
  }
  void set(LayerKnobs& e, std::size_t layer, Knob k, std::size_t option) const {
    const LayerDomain& s = seq.layers[layer];
    const LayerDomain& d = dim.layers[layer];
    switch (k) {
      case Knob::kWiden: e.widen_factor = d.widen[option]; break;
      case Knob::kKernelWiden: e.kernel_widen = d.kernel_widen[option]; break;
      case Knob::kBranching: e.branching = s.branching[option]; break;
      case Knob::kDeepen: e.deepen = s.deepen[option]; break;
      case Knob::kSkip: e.skip = s.skip[option]; break;
      case Knob::kDummy: e.dummy_count = d.dummy[option]; break;
    }
  }
};

// Sets each listed knob to a random non-identity option on every layer with
// probability `p`. The result may still fail when knobs interact.
inline ObfuscationPlan random_plan(const Graph& g, const KnobDomains& dom, const std::vector<Knob>& knobs,
                                   double p, Rng& rng) {
  ObfuscationPlan plan = identity_plan(g, PlanMode::kSequence);
  for (std::size_t l = 0; l < dom.layers(); ++l) {
    if (!rng.bernoulli(p)) continue;
    for (Knob k : knobs) {
      const std::size_t n = dom.options(l, k);
      if (n > 1) dom.set(plan.entries[l], l, k, 1 + rng.index(n - 1));
    }
  }
  return plan;
}

// Resets every knob on layers named in the failure list until the plan
// applies; returns the applied graph.
inline PlannedGraph apply_repairing(const Graph& g, ObfuscationPlan& plan) {
  for (;;) {
    try {
      return apply_plan(g, plan);
    } catch (const PlanError& e) {
      std::set<int> bad;
      for (const KnobFailure& f : e.failures()) bad.insert(f.layer_id);
      for (LayerKnobs& k : plan.entries) {
        if (bad.count(k.layer_id)) k = LayerKnobs{.layer_id = k.layer_id};
      }
    }
  }
}

inline bool touches(const ObfuscationPlan& plan, Knob k) {
  for (const LayerKnobs& e : plan.entries) {
    switch (k) {
      case Knob::kWiden: if (e.widen_factor != 1.0) return true; break;
      case Knob::kKernelWiden: if (e.kernel_widen != 0) return true; break;
      case Knob::kBranching: if (e.branching != Branching::kNone) return true; break;
      case Knob::kDeepen: if (e.deepen != 0) return true; break;
      case Knob::kSkip: if (e.skip != 0) return true; break;
      case Knob::kDummy: if (e.dummy_count != 0) return true; break;
    }
  }
  return false;
}

}  // namespace traceobf::testing
