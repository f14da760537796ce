// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traceobf/graph.hpp"

namespace traceobf {

enum class Branching : std::uint8_t { kNone, kIn2, kIn4, kOut2, kOut4 };

std::string_view branching_name(Branching b);
std::optional<Branching> parse_branching(std::string_view name);

enum class PlanMode : std::uint8_t { kSequence, kDimension };

std::string_view plan_mode_name(PlanMode mode);
std::optional<PlanMode> parse_plan_mode(std::string_view name);

// Discrete widening factors; round(f * j) is exact for j a multiple of 16.
inline constexpr std::array<double, 5> kWidenFactors = {1.0, 1.0625, 1.125, 1.25, 1.5};

inline constexpr int kUnlimitedFusion = -1;

// Knob settings for one complex layer of the vanilla graph. Sequence
// obfuscation searches {branching, fusion_limit, deepen, skip}; dimension
// obfuscation searches {widen_factor, kernel_widen, dummy_count,
// schedule_strategy}. Unsearched fields stay at their identity values.
struct LayerKnobs {
  int layer_id = 0;
  Branching branching = Branching::kNone;
  int deepen = 0;  // 0 or 1
  int skip = 0;    // 0 or 1
  double widen_factor = 1.0;
  int kernel_widen = 0;  // each step grows k by 2
  int dummy_count = 0;
  int fusion_limit = kUnlimitedFusion;
  int schedule_strategy = 0;

  bool is_identity() const;
  friend bool operator==(const LayerKnobs&, const LayerKnobs&) = default;
};

struct ObfuscationPlan {
  PlanMode mode = PlanMode::kSequence;
  std::vector<LayerKnobs> entries;

  friend bool operator==(const ObfuscationPlan&, const ObfuscationPlan&) = default;
};

// Ids of the complex layers, in topological order.
std::vector<int> complex_layers(const Graph& graph);

// One identity entry per complex layer of `vanilla`.
ObfuscationPlan identity_plan(const Graph& vanilla, PlanMode mode);

std::string encode_plan(const ObfuscationPlan& plan);
ObfuscationPlan decode_plan(std::string_view text, std::string_view source = "<plan>");
// One-line form used inside generation logs.
std::string encode_plan_inline(const ObfuscationPlan& plan);

void save_plan(const ObfuscationPlan& plan, const std::filesystem::path& path);
ObfuscationPlan load_plan(const std::filesystem::path& path);

}  // namespace traceobf
