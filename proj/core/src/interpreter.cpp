// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/interpreter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "traceobf/error.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {

namespace {

Tensor run_conv(const Node& n, const Tensor& x, const TensorShape& out_shape) {
  const Attrs& a = n.attrs;
  const std::vector<float>& w = *n.weights;
  Tensor y(out_shape);
  const int cin_g = a.in_channels / a.groups;
  const int cout_g = a.out_channels / a.groups;
  const int j = a.out_channels;
  for (int b = 0; b < out_shape.batch; ++b) {
    for (int oc = 0; oc < j; ++oc) {
      const int g = oc / cout_g;
      for (int oy = 0; oy < out_shape.height; ++oy) {
        for (int ox = 0; ox < out_shape.width; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < a.k1; ++ky) {
            const int iy = oy * a.stride - a.padding + ky;
            if (iy < 0 || iy >= x.shape.height) continue;
            for (int kx = 0; kx < a.k2; ++kx) {
              const int ix = ox * a.stride - a.padding + kx;
              if (ix < 0 || ix >= x.shape.width) continue;
              const std::size_t wbase = (static_cast<std::size_t>(ky) * a.k2 + kx) * cin_g;
              for (int ic = 0; ic < cin_g; ++ic) {
                acc += static_cast<double>(w[(wbase + ic) * j + oc]) *
                       x.at(b, g * cin_g + ic, iy, ix);
              }
            }
          }
          y.at(b, oc, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

Tensor run_linear(const Node& n, const Tensor& x, const TensorShape& out_shape) {
  const int c = n.attrs.in_channels;
  const int j = n.attrs.out_channels;
  const std::vector<float>& w = *n.weights;
  Tensor y(out_shape);
  for (int b = 0; b < out_shape.batch; ++b) {
    const double* row = x.data.data() + static_cast<std::size_t>(b) * c;
    for (int o = 0; o < j; ++o) {
      double acc = 0.0;
      for (int f = 0; f < c; ++f) acc += static_cast<double>(w[static_cast<std::size_t>(f) * j + o]) * row[f];
      y.data[static_cast<std::size_t>(b) * j + o] = acc;
    }
  }
  return y;
}

Tensor run_batchnorm(const Node& n, const Tensor& x) {
  const int C = x.shape.channels;
  const std::vector<float>& p = *n.weights;
  Tensor y(x.shape);
  const std::size_t hw = static_cast<std::size_t>(x.shape.spatial());
  for (int b = 0; b < x.shape.batch; ++b) {
    for (int ch = 0; ch < C; ++ch) {
      const double scale = p[ch];
      const double shift = p[C + ch];
      const double mean = p[2 * C + ch];
      const double var = p[3 * C + ch];
      const double inv = 1.0 / std::sqrt(var + static_cast<double>(n.attrs.eps));
      const std::size_t base = (static_cast<std::size_t>(b) * C + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        y.data[base + i] = scale * (x.data[base + i] - mean) * inv + shift;
      }
    }
  }
  return y;
}

Tensor run_maxpool(const Node& n, const Tensor& x, const TensorShape& out_shape) {
  Tensor y(out_shape);
  const int win = n.attrs.window;
  const int s = n.attrs.stride;
  for (int b = 0; b < out_shape.batch; ++b) {
    for (int ch = 0; ch < out_shape.channels; ++ch) {
      for (int oy = 0; oy < out_shape.height; ++oy) {
        for (int ox = 0; ox < out_shape.width; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          for (int ky = 0; ky < win; ++ky) {
            for (int kx = 0; kx < win; ++kx) {
              best = std::max(best, x.at(b, ch, oy * s + ky, ox * s + kx));
            }
          }
          y.at(b, ch, oy, ox) = best;
        }
      }
    }
  }
  return y;
}

Tensor run_softmax(const Tensor& x) {
  Tensor y(x.shape);
  const std::size_t row = static_cast<std::size_t>(x.shape.elements() / x.shape.batch);
  for (int b = 0; b < x.shape.batch; ++b) {
    const double* in = x.data.data() + b * row;
    double* out = y.data.data() + b * row;
    const double peak = *std::max_element(in, in + row);
    double total = 0.0;
    for (std::size_t i = 0; i < row; ++i) {
      out[i] = std::exp(in[i] - peak);
      total += out[i];
    }
    for (std::size_t i = 0; i < row; ++i) out[i] /= total;
  }
  return y;
}

Tensor run_concat(const std::vector<const Tensor*>& xs, const TensorShape& out_shape) {
  Tensor y(out_shape);
  const std::size_t hw = static_cast<std::size_t>(out_shape.spatial());
  for (int b = 0; b < out_shape.batch; ++b) {
    int offset = 0;
    for (const Tensor* x : xs) {
      const std::size_t n = static_cast<std::size_t>(x->shape.channels) * hw;
      std::copy_n(x->data.begin() + b * n, n,
                  y.data.begin() + (static_cast<std::size_t>(b) * out_shape.channels + offset) * hw);
      offset += x->shape.channels;
    }
  }
  return y;
}

Tensor run_slice(const Node& n, const Tensor& x, const TensorShape& out_shape) {
  Tensor y(out_shape);
  const std::size_t hw = static_cast<std::size_t>(x.shape.spatial());
  const std::size_t span = static_cast<std::size_t>(out_shape.channels) * hw;
  for (int b = 0; b < x.shape.batch; ++b) {
    std::copy_n(x.data.begin() + (static_cast<std::size_t>(b) * x.shape.channels + n.attrs.begin) * hw,
                span, y.data.begin() + b * span);
  }
  return y;
}

}  // namespace

Tensor::Tensor(TensorShape s, std::vector<double> values) : shape(s), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(s.elements())) {
    throw Error(ErrorCode::kShapeMismatch, "tensor data does not match its shape");
  }
}

Tensor random_normal_tensor(const TensorShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.data) v = rng.normal();
  return t;
}

Tensor execute(const Graph& graph, const Tensor& input) {
  if (!(input.shape == graph.input_shape())) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("input {} does not match graph input {}", to_string(input.shape),
                            to_string(graph.input_shape())));
  }
  if (!graph.has_all_weights()) {
    throw Error(ErrorCode::kPrecondition, "execute requires a graph with weights");
  }
  const Graph shaped = infer_shapes(graph);
  const std::vector<int> order = topo_order(shaped);

  std::map<int, int> remaining;
  for (const auto& [id, n] : shaped.nodes()) {
    for (int in : n.inputs) ++remaining[in];
  }
  std::map<int, Tensor> values;
  for (int id : order) {
    const Node& n = shaped.node(id);
    std::vector<const Tensor*> xs;
    if (n.inputs.empty()) {
      xs.push_back(&input);
    } else {
      for (int in : n.inputs) xs.push_back(&values.at(in));
    }
    const TensorShape& out_shape = *n.shape;
    Tensor y;
    switch (n.kind) {
      case OpKind::kConv2D: y = run_conv(n, *xs[0], out_shape); break;
      case OpKind::kLinear: y = run_linear(n, *xs[0], out_shape); break;
      case OpKind::kReLU:
        y = *xs[0];
        for (double& v : y.data) v = std::max(0.0, v);
        break;
      case OpKind::kBatchNorm: y = run_batchnorm(n, *xs[0]); break;
      case OpKind::kMaxPool: y = run_maxpool(n, *xs[0], out_shape); break;
      case OpKind::kAdd:
        y = *xs[0];
        if (n.attrs.constant) {
          for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += (*n.weights)[i];
        } else {
          for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += xs[1]->data[i];
        }
        break;
      case OpKind::kConcat: y = run_concat(xs, out_shape); break;
      case OpKind::kSlice: y = run_slice(n, *xs[0], out_shape); break;
      case OpKind::kSoftMax: y = run_softmax(*xs[0]); break;
    }
    values.emplace(id, std::move(y));
    for (int in : n.inputs) {
      if (--remaining[in] == 0 && in != shaped.output_id()) values.erase(in);
    }
  }
  return std::move(values.at(shaped.output_id()));
}

EquivalenceResult equivalence_check(const Graph& reference, const Graph& candidate, int trials,
                                    std::uint64_t seed, double tol) {
  if (!(reference.input_shape() == candidate.input_shape())) {
    throw Error(ErrorCode::kShapeMismatch, "graphs take different input shapes");
  }
  EquivalenceResult result{true, 0.0};
  for (int t = 0; t < trials; ++t) {
    const Tensor x = random_normal_tensor(reference.input_shape(), derive_seed(seed, t));
    const Tensor a = execute(candidate, x);
    const Tensor b = execute(reference, x);
    if (!(a.shape == b.shape)) {
      throw Error(ErrorCode::kShapeMismatch,
                  fmt::format("outputs differ in shape: {} vs {}", to_string(a.shape),
                              to_string(b.shape)));
    }
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const double diff = std::abs(a.data[i] - b.data[i]);
      result.max_abs_rel_diff = std::max(result.max_abs_rel_diff, diff / (1.0 + std::abs(b.data[i])));
      if (diff > tol * (1.0 + std::abs(b.data[i])) || std::isnan(diff)) result.equivalent = false;
    }
  }
  return result;
}

}  // namespace traceobf
