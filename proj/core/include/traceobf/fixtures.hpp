// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference networks at the graph level: VGG-11/13 and ResNet-20/32 on
// 3x32x32 inputs, VGG-19, ResNet-18 and MobileNet-V2 on 3x224x224 inputs, and
// a small three-convolution network used for dimension studies.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traceobf/graph.hpp"

namespace traceobf {

struct Fixture {
  std::string name;
  Graph graph;
  // Layers whose dimensions are scored in dimension studies.
  std::vector<int> target_layers;
};

std::vector<std::string> fixture_names();
std::vector<std::string> cifar_fixture_names();

// Architecture only unless `weight_seed` is given. Throws Error(kConfig) for
// an unknown name.
Fixture make_fixture(std::string_view name, std::optional<std::uint64_t> weight_seed = std::nullopt);

}  // namespace traceobf
