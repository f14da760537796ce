// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random network generator used to build the attacker's training corpus.

#pragma once

#include <cstdint>

#include "traceobf/graph.hpp"

namespace traceobf {

// Probabilities of each block kind; must sum to 1.
struct BlockMix {
  double plain = 0.35;
  double residual = 0.2;
  double depthwise = 0.15;
  double pool = 0.15;
  double batchnorm = 0.15;
};

struct ArchGenConfig {
  TensorShape input_shape{1, 3, 32, 32};
  int num_classes = 10;
  int min_depth = 6;  // convolution blocks
  int max_depth = 16;
  BlockMix block_mix;
  std::uint64_t seed = 0;
};

ArchGenConfig cifar_arch_config(std::uint64_t seed = 0);
ArchGenConfig imagenet_arch_config(std::uint64_t seed = 0);

// Throws Error(kConfig) when the mix does not sum to 1 or min_depth < 3.
void check_arch_config(const ArchGenConfig& config);

// Convolution blocks drawn from the mix, then pooling down to at most 4x4,
// up to two hidden Linear layers, the classifier and a SoftMax. The result
// carries no weights and is a pure function of the config.
Graph generate_random_arch(const ArchGenConfig& config);

}  // namespace traceobf
