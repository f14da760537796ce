// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference executor. It exists to certify that obfuscating rewrites keep
// the network's function; it is not the simulated device.

#pragma once

#include <cstdint>
#include <vector>

#include "traceobf/graph.hpp"

namespace traceobf {

struct Tensor {
  TensorShape shape;
  std::vector<double> data;  // row-major (b, c, h, w)

  Tensor() = default;
  explicit Tensor(TensorShape s) : shape(s), data(static_cast<std::size_t>(s.elements()), 0.0) {}
  Tensor(TensorShape s, std::vector<double> values);

  double& at(int b, int c, int h, int w) {
    return data[static_cast<std::size_t>(((static_cast<std::int64_t>(b) * shape.channels + c) *
                                              shape.height + h) * shape.width + w)];
  }
  double at(int b, int c, int h, int w) const {
    return data[static_cast<std::size_t>(((static_cast<std::int64_t>(b) * shape.channels + c) *
                                              shape.height + h) * shape.width + w)];
  }
};

// Standard-normal entries drawn from `seed`.
Tensor random_normal_tensor(const TensorShape& shape, std::uint64_t seed);

// Requires a graph carrying all weights. Throws Error(kShapeMismatch) when
// `input` does not match the graph's input shape.
Tensor execute(const Graph& graph, const Tensor& input);

struct EquivalenceResult {
  bool equivalent = false;
  // max over trials and elements of |a - b| / (1 + |b|)
  double max_abs_rel_diff = 0.0;
};

inline constexpr double kDefaultEquivalenceTol = 1e-5;

EquivalenceResult equivalence_check(const Graph& reference, const Graph& candidate, int trials,
                                    std::uint64_t seed, double tol = kDefaultEquivalenceTol);

}  // namespace traceobf
