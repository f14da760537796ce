// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/builder.hpp"

#include <cmath>

#include "traceobf/error.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {

GraphBuilder::GraphBuilder(TensorShape input) : graph_(input) {}

const TensorShape& GraphBuilder::shape(int id) const {
  if (id == kInput) return graph_.input_shape();
  return shapes_.at(id);
}

int GraphBuilder::append(Node node) {
  node.id = graph_.next_id();
  std::vector<TensorShape> ins;
  if (node.inputs.size() == 1 && node.inputs[0] == kInput) node.inputs.clear();
  if (node.inputs.empty()) {
    ins.push_back(graph_.input_shape());
  } else {
    for (int in : node.inputs) ins.push_back(shape(in));
  }
  const TensorShape out = node_output_shape(node, ins, graph_.input_shape());
  const int id = graph_.add(std::move(node));
  shapes_[id] = out;
  return id;
}

int GraphBuilder::conv(int in, int out_channels, int kernel, int stride, int padding, int groups) {
  Node n;
  n.kind = OpKind::kConv2D;
  n.attrs.k1 = n.attrs.k2 = kernel;
  n.attrs.in_channels = shape(in).channels;
  n.attrs.out_channels = out_channels;
  n.attrs.stride = stride;
  n.attrs.padding = padding < 0 ? kernel / 2 : padding;
  n.attrs.groups = groups;
  n.inputs = {in};
  return append(std::move(n));
}

int GraphBuilder::linear(int in, int out_features) {
  const TensorShape& s = shape(in);
  Node n;
  n.kind = OpKind::kLinear;
  n.attrs.in_channels = static_cast<int>(s.channels * s.spatial());
  n.attrs.out_channels = out_features;
  n.inputs = {in};
  return append(std::move(n));
}

int GraphBuilder::relu(int in) {
  Node n;
  n.kind = OpKind::kReLU;
  n.inputs = {in};
  return append(std::move(n));
}

int GraphBuilder::batchnorm(int in) {
  Node n;
  n.kind = OpKind::kBatchNorm;
  n.inputs = {in};
  return append(std::move(n));
}

int GraphBuilder::maxpool(int in, int window, int stride) {
  Node n;
  n.kind = OpKind::kMaxPool;
  n.attrs.window = window;
  n.attrs.stride = stride;
  n.inputs = {in};
  return append(std::move(n));
}

int GraphBuilder::global_pool(int in) {
  const TensorShape& s = shape(in);
  if (s.height != s.width) throw Error(ErrorCode::kPrecondition, "global pooling needs a square input");
  return maxpool(in, s.height, s.height);
}

int GraphBuilder::add(int a, int b) {
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  return append(std::move(n));
}

int GraphBuilder::concat(const std::vector<int>& ins) {
  Node n;
  n.kind = OpKind::kConcat;
  n.inputs = ins;
  return append(std::move(n));
}

int GraphBuilder::slice(int in, int begin, int end) {
  Node n;
  n.kind = OpKind::kSlice;
  n.attrs.begin = begin;
  n.attrs.end = end;
  n.inputs = {in};
  return append(std::move(n));
}

int GraphBuilder::softmax(int in) {
  Node n;
  n.kind = OpKind::kSoftMax;
  n.inputs = {in};
  return append(std::move(n));
}

Graph GraphBuilder::finish(int output) {
  graph_.set_output(output);
  return graph_;
}

void randomize_weights(Graph& graph, std::uint64_t seed) {
  const Graph shaped = infer_shapes(graph);
  for (const auto& [id, node] : shaped.nodes()) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
    const std::size_t count = expected_weight_count(node, node.shape);
    if (count == 0) continue;
    std::vector<float> w(count);
    switch (node.kind) {
      case OpKind::kConv2D: {
        const double fan_in =
            static_cast<double>(node.attrs.k1) * node.attrs.k2 * (node.attrs.in_channels / node.attrs.groups);
        const double sd = std::sqrt(2.0 / fan_in);
        for (float& v : w) v = static_cast<float>(rng.normal(0.0, sd));
        break;
      }
      case OpKind::kLinear: {
        const double sd = std::sqrt(2.0 / node.attrs.in_channels);
        for (float& v : w) v = static_cast<float>(rng.normal(0.0, sd));
        break;
      }
      case OpKind::kBatchNorm: {
        const std::size_t c = count / 4;
        for (std::size_t i = 0; i < c; ++i) {
          w[i] = static_cast<float>(rng.uniform(0.5, 1.5));
          w[c + i] = static_cast<float>(rng.normal(0.0, 0.1));
          w[2 * c + i] = static_cast<float>(rng.normal(0.0, 0.1));
          w[3 * c + i] = static_cast<float>(rng.uniform(0.5, 1.5));
        }
        break;
      }
      default:
        break;
    }
    graph.mutable_node(id).weights = make_weights(std::move(w));
  }
}

Graph strip_weights(const Graph& graph) {
  Graph out = graph;
  for (const auto& [id, node] : graph.nodes()) out.mutable_node(id).weights.reset();
  return out;
}

}  // namespace traceobf
