// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/graph.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <set>

#include <fmt/format.h>

#include "traceobf/error.hpp"

namespace traceobf {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "Conv2D", "Linear", "ReLU", "BatchNorm", "MaxPool", "Add", "Concat", "Slice", "SoftMax"};

class ShapeFailure {
 public:
  ShapeFailure(ViolationKind kind, std::string message)
      : kind_(kind), message_(std::move(message)) {}
  ViolationKind kind() const { return kind_; }
  const std::string& message() const { return message_; }

 private:
  ViolationKind kind_;
  std::string message_;
};

int conv_extent(int in, int kernel, int stride, int padding) {
  const int span = in + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kCycleDetected: return "CycleDetected";
    case ErrorCode::kInvalidGraph: return "InvalidGraph";
    case ErrorCode::kNotWidenable: return "NotWidenable";
    case ErrorCode::kNotDivisible: return "NotDivisible";
    case ErrorCode::kNoActivation: return "NoActivation";
    case ErrorCode::kPrecondition: return "Precondition";
    case ErrorCode::kInvalidStrategy: return "InvalidStrategy";
    case ErrorCode::kInvalidPlan: return "InvalidPlan";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptyTruth: return "EmptyTruth";
    case ErrorCode::kZeroTruth: return "ZeroTruth";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kMissingModels: return "MissingModels";
    case ErrorCode::kConfig: return "ConfigError";
  }
  return "Error";
}

std::string to_string(const TensorShape& shape) {
  return fmt::format("({},{},{},{})", shape.batch, shape.channels, shape.height, shape.width);
}

std::string_view op_kind_name(OpKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<OpKind> parse_op_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

std::string_view violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kCycle: return "Cycle";
    case ViolationKind::kDanglingInput: return "DanglingInput";
    case ViolationKind::kChannelMismatch: return "ChannelMismatch";
    case ViolationKind::kShapeMismatch: return "ShapeMismatch";
    case ViolationKind::kMissingWeights: return "MissingWeights";
    case ViolationKind::kUnsupportedAttr: return "UnsupportedAttr";
    case ViolationKind::kBadArity: return "BadArity";
    case ViolationKind::kBadOutput: return "BadOutput";
  }
  return "Violation";
}

WeightData make_weights(std::vector<float> values) {
  return std::make_shared<const std::vector<float>>(std::move(values));
}

std::size_t expected_weight_count(const Node& node, const std::optional<TensorShape>& out_shape) {
  const Attrs& a = node.attrs;
  switch (node.kind) {
    case OpKind::kConv2D:
      if (a.groups <= 0) return 0;
      return static_cast<std::size_t>(a.k1) * a.k2 * (a.in_channels / a.groups) * a.out_channels;
    case OpKind::kLinear:
      return static_cast<std::size_t>(a.in_channels) * a.out_channels;
    case OpKind::kBatchNorm:
      return out_shape ? static_cast<std::size_t>(4 * out_shape->channels) : 0;
    case OpKind::kAdd:
      return (a.constant && out_shape) ? static_cast<std::size_t>(out_shape->elements()) : 0;
    default:
      return 0;
  }
}

const Node& Graph::node(int id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(ErrorCode::kInvalidGraph, fmt::format("no node {}", id));
  return it->second;
}

Node& Graph::mutable_node(int id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(ErrorCode::kInvalidGraph, fmt::format("no node {}", id));
  return it->second;
}

int Graph::add(Node node) {
  if (node.id < 0) node.id = next_id();
  if (nodes_.count(node.id)) {
    throw Error(ErrorCode::kInvalidGraph, fmt::format("duplicate node id {}", node.id));
  }
  const int id = node.id;
  nodes_.emplace(id, std::move(node));
  return id;
}

void Graph::remove(int id) { nodes_.erase(id); }

std::vector<int> Graph::consumers(int id) const {
  std::vector<int> out;
  for (const auto& [nid, n] : nodes_) {
    for (int in : n.inputs) {
      if (in == id) out.push_back(nid);
    }
  }
  return out;
}

void Graph::replace_uses(int from, int to, const std::vector<int>& except) {
  for (auto& [nid, n] : nodes_) {
    if (std::find(except.begin(), except.end(), nid) != except.end()) continue;
    for (int& in : n.inputs) {
      if (in == from) in = to;
    }
  }
  if (output_id_ == from) output_id_ = to;
}

bool Graph::has_all_weights() const {
  for (const auto& [id, n] : nodes_) {
    const bool needs = n.kind == OpKind::kConv2D || n.kind == OpKind::kLinear ||
                       n.kind == OpKind::kBatchNorm ||
                       (n.kind == OpKind::kAdd && n.attrs.constant);
    if (needs && !n.has_weights()) return false;
  }
  return true;
}

std::vector<int> topo_order(const Graph& graph) {
  std::map<int, int> indegree;
  std::map<int, std::vector<int>> successors;
  for (const auto& [id, n] : graph.nodes()) {
    indegree[id];
    for (int in : n.inputs) {
      if (!graph.contains(in)) continue;
      ++indegree[id];
      successors[in].push_back(id);
    }
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push(id);
  }
  std::vector<int> order;
  order.reserve(graph.size());
  while (!ready.empty()) {
    const int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (int succ : successors[id]) {
      if (--indegree[succ] == 0) ready.push(succ);
    }
  }
  if (order.size() != graph.size()) {
    int culprit = -1;
    for (const auto& [id, deg] : indegree) {
      if (deg > 0) {
        culprit = id;
        break;
      }
    }
    throw Error(ErrorCode::kCycleDetected, fmt::format("cycle through node {}", culprit));
  }
  return order;
}

namespace {

TensorShape output_shape_or_fail(const Node& node, const std::vector<TensorShape>& in,
                                  const TensorShape& graph_input) {
  const Attrs& a = node.attrs;
  auto require_arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeFailure(ViolationKind::kBadArity,
                         fmt::format("{} expects {} input(s), got {}", op_kind_name(node.kind), n,
                                     in.size()));
    }
  };
  switch (node.kind) {
    case OpKind::kConv2D: {
      require_arity(1);
      const TensorShape& x = in[0];
      if (x.channels != a.in_channels) {
        throw ShapeFailure(ViolationKind::kChannelMismatch,
                           fmt::format("Conv2D expects {} input channels, producer has {}",
                                       a.in_channels, x.channels));
      }
      const int ho = conv_extent(x.height, a.k1, a.stride, a.padding);
      const int wo = conv_extent(x.width, a.k2, a.stride, a.padding);
      if (ho < 1 || wo < 1) {
        throw ShapeFailure(ViolationKind::kShapeMismatch, "Conv2D kernel larger than input");
      }
      return {x.batch, a.out_channels, ho, wo};
    }
    case OpKind::kLinear: {
      require_arity(1);
      const TensorShape& x = in[0];
      const std::int64_t features = x.elements() / x.batch;
      if (features != a.in_channels) {
        throw ShapeFailure(ViolationKind::kChannelMismatch,
                           fmt::format("Linear expects {} input features, producer has {}",
                                       a.in_channels, features));
      }
      return {x.batch, a.out_channels, 1, 1};
    }
    case OpKind::kReLU:
    case OpKind::kBatchNorm:
    case OpKind::kSoftMax:
      require_arity(1);
      return in[0];
    case OpKind::kMaxPool: {
      require_arity(1);
      const TensorShape& x = in[0];
      const int ho = conv_extent(x.height, a.window, a.stride, 0);
      const int wo = conv_extent(x.width, a.window, a.stride, 0);
      if (ho < 1 || wo < 1) {
        throw ShapeFailure(ViolationKind::kShapeMismatch, "MaxPool window larger than input");
      }
      return {x.batch, x.channels, ho, wo};
    }
    case OpKind::kAdd: {
      if (a.constant) {
        require_arity(1);
        return in[0];
      }
      require_arity(2);
      if (!(in[0] == in[1])) {
        const bool channel_only = in[0].batch == in[1].batch && in[0].height == in[1].height &&
                                  in[0].width == in[1].width;
        throw ShapeFailure(
            channel_only ? ViolationKind::kChannelMismatch : ViolationKind::kShapeMismatch,
            fmt::format("Add operands {} and {} differ", to_string(in[0]), to_string(in[1])));
      }
      return in[0];
    }
    case OpKind::kConcat: {
      if (in.size() < 2) {
        throw ShapeFailure(ViolationKind::kBadArity, "Concat expects at least 2 inputs");
      }
      TensorShape out = in[0];
      out.channels = 0;
      for (const TensorShape& s : in) {
        if (s.batch != in[0].batch || s.height != in[0].height || s.width != in[0].width) {
          throw ShapeFailure(ViolationKind::kShapeMismatch, "Concat operands differ spatially");
        }
        out.channels += s.channels;
      }
      return out;
    }
    case OpKind::kSlice: {
      require_arity(1);
      const TensorShape& x = in[0];
      if (a.begin < 0 || a.end > x.channels || a.begin >= a.end) {
        throw ShapeFailure(ViolationKind::kChannelMismatch,
                           fmt::format("Slice [{}, {}) outside {} channels", a.begin, a.end,
                                       x.channels));
      }
      return {x.batch, a.end - a.begin, x.height, x.width};
    }
  }
  (void)graph_input;
  throw ShapeFailure(ViolationKind::kShapeMismatch, "unknown operator");
}

std::vector<TensorShape> input_shapes(const Graph& graph, const Node& node,
                                      const std::map<int, TensorShape>& known) {
  std::vector<TensorShape> shapes;
  if (node.inputs.empty()) {
    shapes.push_back(graph.input_shape());
    return shapes;
  }
  for (int in : node.inputs) shapes.push_back(known.at(in));
  return shapes;
}

std::optional<Violation> check_attrs(const Node& node) {
  const Attrs& a = node.attrs;
  auto bad = [&](std::string msg) {
    return Violation{ViolationKind::kUnsupportedAttr, node.id, std::move(msg)};
  };
  switch (node.kind) {
    case OpKind::kConv2D:
      if (a.k1 < 1 || a.k2 < 1) return bad("kernel size must be positive");
      if (a.stride != 1 && a.stride != 2) return bad("stride must be 1 or 2");
      if (a.padding < 0) return bad("padding must be non-negative");
      if (a.in_channels < 1 || a.out_channels < 1) return bad("channel counts must be positive");
      if (a.groups < 1 || a.in_channels % a.groups != 0 || a.out_channels % a.groups != 0) {
        return bad("groups must divide both channel counts");
      }
      break;
    case OpKind::kLinear:
      if (a.in_channels < 1 || a.out_channels < 1) return bad("feature counts must be positive");
      break;
    case OpKind::kMaxPool:
      if (a.window < 1) return bad("window must be positive");
      if (a.stride < 1) return bad("stride must be positive");
      break;
    default:
      break;
  }
  return std::nullopt;
}

}  // namespace

TensorShape node_output_shape(const Node& node, const std::vector<TensorShape>& inputs,
                              const TensorShape& graph_input) {
  try {
    return output_shape_or_fail(node, inputs, graph_input);
  } catch (const ShapeFailure& f) {
    throw Error(ErrorCode::kShapeMismatch, fmt::format("node {}: {}", node.id, f.message()));
  }
}

Graph infer_shapes(const Graph& graph) {
  Graph out = graph;
  std::map<int, TensorShape> known;
  for (int id : topo_order(graph)) {
    Node& n = out.mutable_node(id);
    for (int in : n.inputs) {
      if (!graph.contains(in)) {
        throw Error(ErrorCode::kShapeMismatch,
                    fmt::format("node {}: input {} does not exist", id, in));
      }
    }
    const TensorShape s = node_output_shape(n, input_shapes(graph, n, known), graph.input_shape());
    known[id] = s;
    n.shape = s;
  }
  if (!graph.contains(graph.output_id())) {
    throw Error(ErrorCode::kShapeMismatch, "graph output does not name a node");
  }
  return out;
}

std::vector<Violation> validate(const Graph& graph, const ValidateOptions& options) {
  std::vector<Violation> out;
  if (!graph.input_shape().valid()) {
    out.push_back({ViolationKind::kShapeMismatch, -1, "input shape must be positive"});
  }
  for (const auto& [id, n] : graph.nodes()) {
    for (int in : n.inputs) {
      if (!graph.contains(in)) {
        out.push_back({ViolationKind::kDanglingInput, id,
                       fmt::format("input {} does not exist", in)});
      }
      if (in == id) out.push_back({ViolationKind::kCycle, id, "self loop"});
    }
    if (auto v = check_attrs(n)) out.push_back(*v);
  }
  if (!graph.contains(graph.output_id())) {
    out.push_back({ViolationKind::kBadOutput, graph.output_id(), "output does not name a node"});
  }
  std::vector<int> order;
  try {
    order = topo_order(graph);
  } catch (const Error& e) {
    if (std::none_of(out.begin(), out.end(),
                     [](const Violation& v) { return v.kind == ViolationKind::kCycle; })) {
      out.push_back({ViolationKind::kCycle, -1, e.what()});
    }
    return out;
  }
  if (!out.empty()) return out;

  std::map<int, TensorShape> known;
  std::set<int> failed;
  for (int id : order) {
    const Node& n = graph.node(id);
    bool upstream_failed = false;
    for (int in : n.inputs) upstream_failed |= failed.count(in) != 0;
    if (upstream_failed) {
      failed.insert(id);
      continue;
    }
    try {
      const TensorShape s =
          output_shape_or_fail(n, input_shapes(graph, n, known), graph.input_shape());
      known[id] = s;
      const std::size_t expected = expected_weight_count(n, s);
      if (n.has_weights() && n.weight_count() != expected) {
        out.push_back({ViolationKind::kMissingWeights, id,
                       fmt::format("expected {} weights, found {}", expected, n.weight_count())});
      } else if (options.require_weights && expected > 0 && !n.has_weights()) {
        out.push_back({ViolationKind::kMissingWeights, id, "weights absent"});
      }
    } catch (const ShapeFailure& f) {
      out.push_back({f.kind(), id, f.message()});
      failed.insert(id);
    }
  }
  return out;
}

LabelSequence label_sequence(const Graph& graph) {
  LabelSequence seq;
  for (int id : topo_order(graph)) {
    const OpKind kind = graph.node(id).kind;
    if (is_complex(kind)) seq.labels.push_back(kind);
  }
  return seq;
}

}  // namespace traceobf
