// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "traceobf/graph.hpp"

namespace traceobf {

// Appends nodes with consecutive ids while tracking shapes, so channel
// attributes are filled in from the producer.
class GraphBuilder {
 public:
  static constexpr int kInput = -1;

  explicit GraphBuilder(TensorShape input);

  // `padding` < 0 selects k / 2.
  int conv(int in, int out_channels, int kernel, int stride = 1, int padding = -1, int groups = 1);
  int linear(int in, int out_features);
  int relu(int in);
  int batchnorm(int in);
  int maxpool(int in, int window, int stride);
  // MaxPool over the whole spatial extent.
  int global_pool(int in);
  int add(int a, int b);
  int concat(const std::vector<int>& ins);
  int slice(int in, int begin, int end);
  int softmax(int in);

  const TensorShape& shape(int id) const;
  Graph finish(int output);

 private:
  int append(Node node);

  Graph graph_;
  std::map<int, TensorShape> shapes_;
};

// Attaches weights to every node that needs them: He-normal Conv2D/Linear
// weights, BatchNorm with positive scale and variance, zero constant addends.
void randomize_weights(Graph& graph, std::uint64_t seed);

// Copy with all weights dropped.
Graph strip_weights(const Graph& graph);

}  // namespace traceobf
