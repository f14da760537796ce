// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Computational-graph IR: operator nodes, shape inference, validation and
// ground-truth labeling of the operators an attacker tries to recover.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace traceobf {

struct TensorShape {
  int batch = 1;
  int channels = 1;
  int height = 1;
  int width = 1;

  std::int64_t elements() const {
    return static_cast<std::int64_t>(batch) * channels * height * width;
  }
  std::int64_t spatial() const { return static_cast<std::int64_t>(height) * width; }
  bool valid() const { return batch >= 1 && channels >= 1 && height >= 1 && width >= 1; }

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

std::string to_string(const TensorShape& shape);

enum class OpKind : std::uint8_t {
  kConv2D,
  kLinear,
  kReLU,
  kBatchNorm,
  kMaxPool,
  kAdd,
  kConcat,
  kSlice,
  kSoftMax,
};

std::string_view op_kind_name(OpKind kind);
std::optional<OpKind> parse_op_kind(std::string_view name);

// Conv2D, Linear, MaxPool and SoftMax are the operators that receive labels.
constexpr bool is_complex(OpKind kind) {
  return kind == OpKind::kConv2D || kind == OpKind::kLinear || kind == OpKind::kMaxPool ||
         kind == OpKind::kSoftMax;
}

// Elementwise operators that the backend may fuse into a preceding kernel.
constexpr bool is_injective(OpKind kind) {
  return kind == OpKind::kReLU || kind == OpKind::kBatchNorm || kind == OpKind::kAdd;
}

// Flat attribute record; each kind reads only the fields documented for it.
struct Attrs {
  // Conv2D: kernel k1 x k2, c -> j channels. Linear: c -> j features.
  int k1 = 1;
  int k2 = 1;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  // MaxPool: square window with `stride`.
  int window = 0;
  // Slice: channel range [begin, end).
  int begin = 0;
  int end = 0;
  // BatchNorm epsilon.
  float eps = 1e-5f;
  // Add: second operand is a stored constant tensor instead of a node.
  bool constant = false;

  friend bool operator==(const Attrs&, const Attrs&) = default;
};

using WeightData = std::shared_ptr<const std::vector<float>>;

// Weights are immutable once attached and shared between graph copies.
//   Conv2D     (k1, k2, c / groups, j) row-major
//   Linear     (c, j)
//   BatchNorm  (4, C): scale, shift, running mean, running variance
//   Add const  (b, C, H, W) addend
struct Node {
  int id = 0;
  OpKind kind = OpKind::kReLU;
  Attrs attrs;
  WeightData weights;
  std::vector<int> inputs;  // empty: reads the graph input
  std::optional<TensorShape> shape;

  bool has_weights() const { return weights != nullptr; }
  std::size_t weight_count() const { return weights ? weights->size() : 0; }
};

WeightData make_weights(std::vector<float> values);

// Number of stored parameters the node's attributes imply (0 when none).
std::size_t expected_weight_count(const Node& node, const std::optional<TensorShape>& out_shape);

class Graph {
 public:
  Graph() = default;
  explicit Graph(TensorShape input_shape) : input_shape_(input_shape) {}

  const TensorShape& input_shape() const { return input_shape_; }
  int output_id() const { return output_id_; }
  void set_output(int id) { output_id_ = id; }

  const std::map<int, Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(int id) const { return nodes_.count(id) != 0; }
  const Node& node(int id) const;
  Node& mutable_node(int id);

  // Allocates the next free id when `node.id` is negative.
  int add(Node node);
  void remove(int id);
  int next_id() const { return nodes_.empty() ? 0 : nodes_.rbegin()->first + 1; }

  // Ids of nodes reading `id`, ascending, one entry per edge.
  std::vector<int> consumers(int id) const;
  // Redirects every use of `from` (including the graph output) to `to`,
  // skipping nodes listed in `except`.
  void replace_uses(int from, int to, const std::vector<int>& except = {});

  bool has_all_weights() const;

 private:
  TensorShape input_shape_;
  int output_id_ = -1;
  std::map<int, Node> nodes_;
};

struct LabelSequence {
  std::vector<OpKind> labels;
  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

enum class ViolationKind {
  kCycle,
  kDanglingInput,
  kChannelMismatch,
  kShapeMismatch,
  kMissingWeights,
  kUnsupportedAttr,
  kBadArity,
  kBadOutput,
};

std::string_view violation_kind_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  int node_id;
  std::string message;
};

struct ValidateOptions {
  bool require_weights = true;
};

// Deterministic Kahn order, ties broken by ascending node id.
// Throws Error(kCycleDetected).
std::vector<int> topo_order(const Graph& graph);

// Returns a copy with every node's output shape set. Throws
// Error(kShapeMismatch) naming the first offending node.
Graph infer_shapes(const Graph& graph);

std::vector<Violation> validate(const Graph& graph, const ValidateOptions& options = {});

LabelSequence label_sequence(const Graph& graph);

// Output shape of a single node given its input shapes; shared by shape
// inference and the transforms.
TensorShape node_output_shape(const Node& node, const std::vector<TensorShape>& inputs,
                              const TensorShape& graph_input);

}  // namespace traceobf
