// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

namespace traceobf {

namespace {

bool is_layer(const Node& n) { return n.kind == OpKind::kConv2D || n.kind == OpKind::kLinear; }

const Node& require_layer(const Graph& g, int layer_id, ErrorCode code) {
  if (!g.contains(layer_id)) {
    throw Error(ErrorCode::kPrecondition, fmt::format("node {} does not exist", layer_id));
  }
  const Node& n = g.node(layer_id);
  if (!is_layer(n)) {
    throw Error(code, fmt::format("node {} is {}, not Conv2D or Linear", layer_id,
                                  op_kind_name(n.kind)));
  }
  return n;
}

std::optional<int> sole_consumer(const Graph& g, int id) {
  if (id == g.output_id()) return std::nullopt;
  const auto cons = g.consumers(id);
  if (cons.size() != 1) return std::nullopt;
  return cons[0];
}

struct Tail {
  int node;
  bool relu;
};

// Walks Layer -> [BatchNorm] -> ReLU through sole consumers. The tail is the
// ReLU when present, else the furthest node reached.
Tail activation_tail(const Graph& g, int from) {
  int cur = from;
  if (auto c = sole_consumer(g, cur); c && g.node(*c).kind == OpKind::kBatchNorm) cur = *c;
  if (auto c = sole_consumer(g, cur); c && g.node(*c).kind == OpKind::kReLU) return {*c, true};
  return {cur, false};
}

// Follows sole consumers through ReLU/SoftMax/BatchNorm/constant Add and
// reports whether the walk ends at the graph output.
bool reaches_output_directly(const Graph& g, int from) {
  int cur = from;
  while (true) {
    if (cur == g.output_id()) return true;
    auto c = sole_consumer(g, cur);
    if (!c) return false;
    const Node& n = g.node(*c);
    const bool pass = n.kind == OpKind::kReLU || n.kind == OpKind::kSoftMax ||
                      n.kind == OpKind::kBatchNorm ||
                      (n.kind == OpKind::kAdd && n.attrs.constant);
    if (!pass) return false;
    cur = *c;
  }
}

struct WidenChain {
  std::vector<int> path;  // channel-preserving nodes between layer and consumer
  int consumer;
};

WidenChain widen_chain(const Graph& g, int layer_id) {
  const Node& layer = require_layer(g, layer_id, ErrorCode::kNotWidenable);
  if (layer.kind == OpKind::kConv2D && layer.attrs.groups != 1) {
    throw Error(ErrorCode::kNotWidenable, fmt::format("layer {} is a grouped convolution", layer_id));
  }
  WidenChain chain{{}, -1};
  int cur = layer_id;
  while (true) {
    if (cur == g.output_id()) {
      throw Error(ErrorCode::kNotWidenable, fmt::format("layer {} feeds the graph output", layer_id));
    }
    const auto cons = g.consumers(cur);
    if (cons.size() != 1) {
      throw Error(ErrorCode::kNotWidenable,
                  fmt::format("node {} has {} consumers", cur, cons.size()));
    }
    const Node& n = g.node(cons[0]);
    const bool passes = n.kind == OpKind::kReLU || n.kind == OpKind::kBatchNorm ||
                        n.kind == OpKind::kMaxPool ||
                        (n.kind == OpKind::kAdd && n.attrs.constant);
    if (passes) {
      chain.path.push_back(n.id);
      cur = n.id;
      continue;
    }
    if (n.kind == OpKind::kConv2D && n.attrs.groups == 1) {
      chain.consumer = n.id;
      return chain;
    }
    if (n.kind == OpKind::kLinear) {
      if (reaches_output_directly(g, n.id)) {
        throw Error(ErrorCode::kNotWidenable,
                    fmt::format("layer {} feeds the classifier {}", layer_id, n.id));
      }
      chain.consumer = n.id;
      return chain;
    }
    throw Error(ErrorCode::kNotWidenable,
                fmt::format("layer {} reaches {} node {}", layer_id, op_kind_name(n.kind), n.id));
  }
}

int tail_channels(const Graph& shaped, int id) { return shaped.node(id).shape->channels; }

Node conv1x1(int channels, int input) {
  Node n;
  n.id = -1;
  n.kind = OpKind::kConv2D;
  n.attrs.k1 = n.attrs.k2 = 1;
  n.attrs.in_channels = n.attrs.out_channels = channels;
  n.inputs = {input};
  return n;
}

struct Inserted {
  Graph graph;
  int tail;  // new attach point for later knobs on the same layer
};

Inserted deepen_at(const Graph& in, int layer_id, int attach, bool find_tail, DeepenKernel kernel) {
  require_layer(in, layer_id, ErrorCode::kNoActivation);
  Graph g = infer_shapes(in);
  int tail = attach;
  if (find_tail) {
    const Tail t = activation_tail(g, attach);
    if (!t.relu) {
      throw Error(ErrorCode::kNoActivation,
                  fmt::format("layer {} is not followed by ReLU", layer_id));
    }
    tail = t.node;
  }
  const int ch = tail_channels(g, tail);
  const bool with_weights = g.has_all_weights();
  Node conv = conv1x1(ch, tail);
  if (with_weights) {
    std::vector<float> w(static_cast<std::size_t>(ch) * ch, 0.0f);
    for (int d = 0; d < ch; ++d) {
      for (int m = 0; m < ch; ++m) {
        const bool diag = d == m;
        w[static_cast<std::size_t>(d) * ch + m] =
            kernel == DeepenKernel::kChannelIdentity ? (diag ? 1.0f : 0.0f) : (diag ? 0.0f : 1.0f);
      }
    }
    conv.weights = make_weights(std::move(w));
  }
  const int conv_id = g.add(std::move(conv));
  Node relu;
  relu.id = -1;
  relu.kind = OpKind::kReLU;
  relu.inputs = {conv_id};
  const int relu_id = g.add(std::move(relu));
  g.replace_uses(tail, relu_id, {conv_id});
  return {infer_shapes(g), relu_id};
}

Inserted skip_at(const Graph& in, int attach, bool find_tail) {
  Graph g = infer_shapes(in);
  const int tail = find_tail ? activation_tail(g, attach).node : attach;
  const int ch = tail_channels(g, tail);
  Node conv = conv1x1(ch, tail);
  if (g.has_all_weights()) {
    conv.weights = make_weights(std::vector<float>(static_cast<std::size_t>(ch) * ch, 0.0f));
  }
  const int conv_id = g.add(std::move(conv));
  Node add;
  add.id = -1;
  add.kind = OpKind::kAdd;
  add.inputs = {tail, conv_id};
  const int add_id = g.add(std::move(add));
  g.replace_uses(tail, add_id, {conv_id, add_id});
  return {infer_shapes(g), add_id};
}

Inserted dummy_at(const Graph& in, int attach, bool find_tail, int count) {
  if (count < 0) throw Error(ErrorCode::kPrecondition, "dummy count must be non-negative");
  Graph g = infer_shapes(in);
  const int tail = find_tail ? activation_tail(g, attach).node : attach;
  if (count == 0) return {g, tail};
  const TensorShape shape = *g.node(tail).shape;
  const bool with_weights = g.has_all_weights();
  WeightData zeros;
  if (with_weights) zeros = make_weights(std::vector<float>(static_cast<std::size_t>(shape.elements()), 0.0f));
  std::vector<int> created;
  int prev = tail;
  for (int i = 0; i < count; ++i) {
    Node add;
    add.id = -1;
    add.kind = OpKind::kAdd;
    add.attrs.constant = true;
    add.weights = zeros;
    add.inputs = {prev};
    prev = g.add(std::move(add));
    created.push_back(prev);
  }
  g.replace_uses(tail, prev, created);
  return {infer_shapes(g), prev};
}

struct Branched {
  Graph graph;
  int output;
  std::vector<int> sub_layers;
};

Branched branch_impl(const Graph& in, int layer_id, BranchAxis axis, int parts) {
  if (parts != 2 && parts != 4) {
    throw Error(ErrorCode::kPrecondition, fmt::format("branch parts must be 2 or 4, got {}", parts));
  }
  require_layer(in, layer_id, ErrorCode::kPrecondition);
  Graph g = infer_shapes(in);
  const Node layer = g.node(layer_id);
  const Attrs& a = layer.attrs;
  const bool conv = layer.kind == OpKind::kConv2D;
  if (conv && a.groups != 1) {
    throw Error(ErrorCode::kPrecondition, fmt::format("layer {} is a grouped convolution", layer_id));
  }
  const bool with_weights = layer.has_weights();
  Branched out{{}, -1, {}};

  if (axis == BranchAxis::kOutput) {
    const int j = a.out_channels;
    if (j % parts != 0) {
      throw Error(ErrorCode::kNotDivisible,
                  fmt::format("layer {}: j={} is not divisible by {}", layer_id, j, parts));
    }
    const int jp = j / parts;
    // Conv (k1,k2,c,j) and Linear (c,j) both put j innermost.
    const std::size_t rows = with_weights ? layer.weights->size() / j : 0;
    for (int p = 0; p < parts; ++p) {
      Node sub = layer;
      sub.id = -1;
      sub.shape.reset();
      sub.attrs.out_channels = jp;
      if (with_weights) {
        std::vector<float> w(rows * jp);
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(layer.weights->begin() + r * j + p * jp, jp, w.begin() + r * jp);
        }
        sub.weights = make_weights(std::move(w));
      }
      out.sub_layers.push_back(g.add(std::move(sub)));
    }
    Node cat;
    cat.id = -1;
    cat.kind = OpKind::kConcat;
    cat.inputs = out.sub_layers;
    out.output = g.add(std::move(cat));
  } else {
    const TensorShape in_shape = layer.inputs.empty() ? g.input_shape()
                                                      : *g.node(layer.inputs[0]).shape;
    const int channels = in_shape.channels;
    if (channels % parts != 0) {
      throw Error(ErrorCode::kNotDivisible,
                  fmt::format("layer {}: c={} is not divisible by {}", layer_id, channels, parts));
    }
    const int cp = channels / parts;
    // Rows of the weight matrix contributed by one input channel.
    const std::size_t per_channel =
        conv ? 1 : static_cast<std::size_t>(in_shape.spatial());
    const std::size_t taps = conv ? static_cast<std::size_t>(a.k1) * a.k2 : 1;
    const int j = a.out_channels;
    std::vector<int> slices;
    for (int p = 0; p < parts; ++p) {
      Node s;
      s.id = -1;
      s.kind = OpKind::kSlice;
      s.attrs.begin = p * cp;
      s.attrs.end = (p + 1) * cp;
      s.inputs = layer.inputs;
      slices.push_back(g.add(std::move(s)));
    }
    for (int p = 0; p < parts; ++p) {
      Node sub = layer;
      sub.id = -1;
      sub.shape.reset();
      sub.inputs = {slices[p]};
      sub.attrs.in_channels = conv ? cp : static_cast<int>(cp * per_channel);
      if (with_weights) {
        const std::size_t cin = conv ? static_cast<std::size_t>(channels) : channels * per_channel;
        const std::size_t span = static_cast<std::size_t>(cp) * per_channel;
        std::vector<float> w(taps * span * j);
        for (std::size_t t = 0; t < taps; ++t) {
          const auto src = layer.weights->begin() + (t * cin + p * span) * j;
          std::copy_n(src, span * j, w.begin() + t * span * j);
        }
        sub.weights = make_weights(std::move(w));
      }
      out.sub_layers.push_back(g.add(std::move(sub)));
    }
    int acc = out.sub_layers[0];
    for (int p = 1; p < parts; ++p) {
      Node add;
      add.id = -1;
      add.kind = OpKind::kAdd;
      add.inputs = {acc, out.sub_layers[p]};
      acc = g.add(std::move(add));
    }
    out.output = acc;
  }
  g.replace_uses(layer_id, out.output);
  g.remove(layer_id);
  out.graph = infer_shapes(g);
  return out;
}

Graph widen_impl(const Graph& in, int layer_id, double factor) {
  const Node& original = require_layer(in, layer_id, ErrorCode::kNotWidenable);
  const int j = original.attrs.out_channels;
  const int j2 = static_cast<int>(std::lround(factor * j));
  if (j2 < j) {
    throw Error(ErrorCode::kPrecondition,
                fmt::format("widen factor {} shrinks layer {}", factor, layer_id));
  }
  if (j2 > 2 * j) {
    throw Error(ErrorCode::kPrecondition, fmt::format("widen factor {} exceeds 2", factor));
  }
  if (j2 == j) return in;
  Graph g = infer_shapes(in);
  const WidenChain chain = widen_chain(g, layer_id);
  const int extra = j2 - j;
  auto source = [j](int ch) { return ch < j ? ch : ch - j; };
  auto multiplicity = [extra](int ch) { return ch < extra ? 2.0f : 1.0f; };

  {
    Node& layer = g.mutable_node(layer_id);
    if (layer.has_weights()) {
      const std::vector<float>& w = *layer.weights;
      const std::size_t rows = w.size() / j;
      std::vector<float> u(rows * j2);
      for (std::size_t r = 0; r < rows; ++r) {
        for (int o = 0; o < j2; ++o) u[r * j2 + o] = w[r * j + source(o)];
      }
      layer.weights = make_weights(std::move(u));
    }
    layer.attrs.out_channels = j2;
  }

  for (int id : chain.path) {
    Node& n = g.mutable_node(id);
    if (!n.has_weights()) continue;
    const std::vector<float>& w = *n.weights;
    if (n.kind == OpKind::kBatchNorm) {
      std::vector<float> u(4 * static_cast<std::size_t>(j2));
      for (int r = 0; r < 4; ++r) {
        for (int ch = 0; ch < j2; ++ch) u[r * j2 + ch] = w[r * j + source(ch)];
      }
      n.weights = make_weights(std::move(u));
    } else if (n.kind == OpKind::kAdd) {
      const TensorShape s = *n.shape;
      const std::size_t hw = static_cast<std::size_t>(s.spatial());
      std::vector<float> u(static_cast<std::size_t>(s.batch) * j2 * hw);
      for (int b = 0; b < s.batch; ++b) {
        for (int ch = 0; ch < j2; ++ch) {
          std::copy_n(w.begin() + (static_cast<std::size_t>(b) * j + source(ch)) * hw, hw,
                      u.begin() + (static_cast<std::size_t>(b) * j2 + ch) * hw);
        }
      }
      n.weights = make_weights(std::move(u));
    }
  }

  Node& consumer = g.mutable_node(chain.consumer);
  if (consumer.kind == OpKind::kConv2D) {
    const int m = consumer.attrs.out_channels;
    const std::size_t taps = static_cast<std::size_t>(consumer.attrs.k1) * consumer.attrs.k2;
    if (consumer.has_weights()) {
      const std::vector<float>& w = *consumer.weights;
      std::vector<float> u(taps * j2 * m);
      for (std::size_t t = 0; t < taps; ++t) {
        for (int ch = 0; ch < j2; ++ch) {
          const int src = source(ch);
          const float scale = multiplicity(src);
          for (int o = 0; o < m; ++o) {
            u[(t * j2 + ch) * m + o] = w[(t * j + src) * m + o] / scale;
          }
        }
      }
      consumer.weights = make_weights(std::move(u));
    }
    consumer.attrs.in_channels = j2;
  } else {
    const int last = chain.path.empty() ? layer_id : chain.path.back();
    const std::size_t hw = static_cast<std::size_t>(g.node(last).shape->spatial());
    const int m = consumer.attrs.out_channels;
    if (consumer.has_weights()) {
      const std::vector<float>& w = *consumer.weights;
      std::vector<float> u(static_cast<std::size_t>(j2) * hw * m);
      for (int ch = 0; ch < j2; ++ch) {
        const int src = source(ch);
        const float scale = multiplicity(src);
        for (std::size_t s = 0; s < hw; ++s) {
          for (int o = 0; o < m; ++o) {
            u[(ch * hw + s) * m + o] = w[(src * hw + s) * m + o] / scale;
          }
        }
      }
      consumer.weights = make_weights(std::move(u));
    }
    consumer.attrs.in_channels = static_cast<int>(j2 * hw);
  }
  return infer_shapes(g);
}

Graph widen_kernel_impl(const Graph& in, int layer_id, int steps) {
  if (steps < 0) throw Error(ErrorCode::kPrecondition, "kernel widening steps must be non-negative");
  if (!in.contains(layer_id) || in.node(layer_id).kind != OpKind::kConv2D) {
    throw Error(ErrorCode::kPrecondition, fmt::format("node {} is not a Conv2D", layer_id));
  }
  if (steps == 0) return in;
  Graph g = in;
  Node& n = g.mutable_node(layer_id);
  const Attrs a = n.attrs;
  const int k1 = a.k1 + 2 * steps;
  const int k2 = a.k2 + 2 * steps;
  if (n.has_weights()) {
    const std::size_t inner = static_cast<std::size_t>(a.in_channels / a.groups) * a.out_channels;
    const std::vector<float>& w = *n.weights;
    std::vector<float> u(static_cast<std::size_t>(k1) * k2 * inner, 0.0f);
    for (int y = 0; y < a.k1; ++y) {
      for (int x = 0; x < a.k2; ++x) {
        std::copy_n(w.begin() + (static_cast<std::size_t>(y) * a.k2 + x) * inner, inner,
                    u.begin() + (static_cast<std::size_t>(y + steps) * k2 + x + steps) * inner);
      }
    }
    n.weights = make_weights(std::move(u));
  }
  n.attrs.k1 = k1;
  n.attrs.k2 = k2;
  n.attrs.padding = a.padding + steps;
  return infer_shapes(g);
}

}  // namespace

Graph widen_layer(const Graph& graph, int layer_id, double factor) {
  return widen_impl(graph, layer_id, factor);
}

Graph branch_layer(const Graph& graph, int layer_id, BranchAxis axis, int parts) {
  return branch_impl(graph, layer_id, axis, parts).graph;
}

Graph add_dummy(const Graph& graph, int layer_id, int count) {
  if (!graph.contains(layer_id)) {
    throw Error(ErrorCode::kPrecondition, fmt::format("node {} does not exist", layer_id));
  }
  if (count == 0) return graph;
  return dummy_at(graph, layer_id, true, count).graph;
}

Graph deepen_layer(const Graph& graph, int layer_id, DeepenKernel kernel) {
  return deepen_at(graph, layer_id, layer_id, true, kernel).graph;
}

Graph skip_layer(const Graph& graph, int layer_id) {
  if (!graph.contains(layer_id)) {
    throw Error(ErrorCode::kPrecondition, fmt::format("node {} does not exist", layer_id));
  }
  return skip_at(graph, layer_id, true).graph;
}

Graph widen_kernel(const Graph& graph, int layer_id, int steps) {
  return widen_kernel_impl(graph, layer_id, steps);
}

bool is_widenable(const Graph& graph, int layer_id) {
  try {
    widen_chain(graph, layer_id);
    return true;
  } catch (const Error&) {
    return false;
  }
}

bool has_relu_activation(const Graph& graph, int layer_id) {
  if (!graph.contains(layer_id) || !is_layer(graph.node(layer_id))) return false;
  return activation_tail(graph, layer_id).relu;
}

bool is_branchable(const Graph& graph, int layer_id, BranchAxis axis, int parts) {
  if (!graph.contains(layer_id)) return false;
  const Node& n = graph.node(layer_id);
  if (!is_layer(n) || (n.kind == OpKind::kConv2D && n.attrs.groups != 1)) return false;
  if (axis == BranchAxis::kOutput) return n.attrs.out_channels % parts == 0;
  int channels = graph.input_shape().channels;
  if (!n.inputs.empty()) {
    const Graph shaped = infer_shapes(graph);
    channels = shaped.node(n.inputs[0]).shape->channels;
  }
  return channels % parts == 0;
}

PlanError::PlanError(std::vector<KnobFailure> failures)
    : Error(ErrorCode::kInvalidPlan,
            [&failures] {
              std::string msg = "plan could not be applied:";
              for (const auto& f : failures) {
                msg += fmt::format(" [layer {} {}: {}]", f.layer_id, f.knob, f.message);
              }
              return msg;
            }()),
      failures_(std::move(failures)) {}

PlannedGraph apply_plan(const Graph& vanilla, const ObfuscationPlan& plan) {
  const std::vector<int> layers = complex_layers(vanilla);
  const std::set<int> layer_set(layers.begin(), layers.end());
  std::vector<KnobFailure> failures;
  std::map<int, const LayerKnobs*> by_layer;
  for (const LayerKnobs& e : plan.entries) {
    if (!layer_set.count(e.layer_id)) {
      failures.push_back({e.layer_id, "layer", "not a complex layer of the vanilla graph"});
    } else if (!by_layer.emplace(e.layer_id, &e).second) {
      failures.push_back({e.layer_id, "layer", "listed more than once"});
    }
  }
  if (!failures.empty()) throw PlanError(std::move(failures));

  // Entries in vanilla topological order.
  std::vector<const LayerKnobs*> ordered;
  for (int id : layers) {
    if (auto it = by_layer.find(id); it != by_layer.end()) ordered.push_back(it->second);
  }

  Graph g = vanilla;
  std::map<int, std::vector<int>> anchors;  // vanilla layer -> its layer nodes now
  std::map<int, int> outputs;               // vanilla layer -> node carrying its result
  std::map<int, std::optional<int>> attach; // explicit attach point once a knob inserts
  for (const LayerKnobs* e : ordered) {
    anchors[e->layer_id] = {e->layer_id};
    outputs[e->layer_id] = e->layer_id;
  }

  auto attempt = [&](const LayerKnobs& e, std::string_view knob, auto&& fn) {
    try {
      fn();
    } catch (const Error& err) {
      failures.push_back({e.layer_id, std::string(knob), err.what()});
    }
  };

  for (const LayerKnobs* e : ordered) {
    if (e->widen_factor != 1.0) {
      attempt(*e, "widen", [&] { g = widen_impl(g, e->layer_id, e->widen_factor); });
    }
  }
  for (const LayerKnobs* e : ordered) {
    if (e->kernel_widen != 0) {
      attempt(*e, "kernel_widen", [&] { g = widen_kernel_impl(g, e->layer_id, e->kernel_widen); });
    }
  }
  for (const LayerKnobs* e : ordered) {
    if (e->branching == Branching::kNone) continue;
    attempt(*e, "branching", [&] {
      const BranchAxis axis = (e->branching == Branching::kIn2 || e->branching == Branching::kIn4)
                                  ? BranchAxis::kInput
                                  : BranchAxis::kOutput;
      const int parts = (e->branching == Branching::kIn2 || e->branching == Branching::kOut2) ? 2 : 4;
      Branched b = branch_impl(g, e->layer_id, axis, parts);
      g = std::move(b.graph);
      anchors[e->layer_id] = b.sub_layers;
      outputs[e->layer_id] = b.output;
    });
  }
  auto insert_after = [&](const LayerKnobs& e, auto&& fn) {
    const auto& pos = attach[e.layer_id];
    Inserted ins = pos ? fn(*pos, false) : fn(outputs[e.layer_id], true);
    g = std::move(ins.graph);
    attach[e.layer_id] = ins.tail;
  };
  for (const LayerKnobs* e : ordered) {
    if (e->deepen == 0) continue;
    attempt(*e, "deepen", [&] {
      const Node& n = vanilla.node(e->layer_id);
      if (!is_layer(n)) {
        throw Error(ErrorCode::kNoActivation, "only Conv2D and Linear layers can be deepened");
      }
      insert_after(*e, [&](int at, bool find) {
        return deepen_at(g, anchors[e->layer_id].front(), at, find, DeepenKernel::kChannelIdentity);
      });
    });
  }
  for (const LayerKnobs* e : ordered) {
    if (e->skip == 0) continue;
    attempt(*e, "skip", [&] { insert_after(*e, [&](int at, bool find) { return skip_at(g, at, find); }); });
  }
  for (const LayerKnobs* e : ordered) {
    if (e->dummy_count == 0) continue;
    attempt(*e, "dummy", [&] {
      insert_after(*e, [&](int at, bool find) { return dummy_at(g, at, find, e->dummy_count); });
    });
  }
  if (!failures.empty()) throw PlanError(std::move(failures));

  PlannedGraph out{infer_shapes(g), {}};
  for (const LayerKnobs* e : ordered) {
    for (int a : anchors[e->layer_id]) {
      if (e->fusion_limit != kUnlimitedFusion) out.hints.fusion_limits[a] = e->fusion_limit;
      if (e->schedule_strategy != 0) out.hints.schedule_strategies[a] = e->schedule_strategy;
    }
  }
  return out;
}

}  // namespace traceobf
