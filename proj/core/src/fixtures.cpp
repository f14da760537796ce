// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/fixtures.hpp"

#include <fmt/format.h>

#include "traceobf/builder.hpp"
#include "traceobf/error.hpp"

namespace traceobf {

namespace {

constexpr TensorShape kCifar{1, 3, 32, 32};
constexpr TensorShape kImageNet{1, 3, 224, 224};
constexpr int kPool = 0;

int conv_bn_relu(GraphBuilder& b, int in, int out, int k, int stride = 1) {
  return b.relu(b.batchnorm(b.conv(in, out, k, stride)));
}

Graph vgg(const std::vector<int>& cfg, TensorShape input, const std::vector<int>& hidden, int classes) {
  GraphBuilder b(input);
  int cur = GraphBuilder::kInput;
  for (int c : cfg) cur = c == kPool ? b.maxpool(cur, 2, 2) : conv_bn_relu(b, cur, c, 3);
  for (int h : hidden) cur = b.relu(b.linear(cur, h));
  return b.finish(b.softmax(b.linear(cur, classes)));
}

int basic_block(GraphBuilder& b, int in, int out, int stride) {
  int main = conv_bn_relu(b, in, out, 3, stride);
  main = b.batchnorm(b.conv(main, out, 3));
  int shortcut = in;
  if (stride != 1 || b.shape(in).channels != out) shortcut = b.batchnorm(b.conv(in, out, 1, stride));
  return b.relu(b.add(main, shortcut));
}

Graph cifar_resnet(int blocks_per_stage) {
  GraphBuilder b(kCifar);
  int cur = conv_bn_relu(b, GraphBuilder::kInput, 16, 3);
  const int widths[] = {16, 32, 64};
  for (int stage = 0; stage < 3; ++stage) {
    for (int i = 0; i < blocks_per_stage; ++i) {
      cur = basic_block(b, cur, widths[stage], stage > 0 && i == 0 ? 2 : 1);
    }
  }
  cur = b.global_pool(cur);
  return b.finish(b.softmax(b.linear(cur, 10)));
}

Graph resnet18() {
  GraphBuilder b(kImageNet);
  int cur = conv_bn_relu(b, GraphBuilder::kInput, 64, 7, 2);
  cur = b.maxpool(cur, 2, 2);
  const int widths[] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    for (int i = 0; i < 2; ++i) cur = basic_block(b, cur, widths[stage], stage > 0 && i == 0 ? 2 : 1);
  }
  cur = b.global_pool(cur);
  return b.finish(b.softmax(b.linear(cur, 1000)));
}

Graph mobilenet_v2() {
  GraphBuilder b(kImageNet);
  int cur = conv_bn_relu(b, GraphBuilder::kInput, 32, 3, 2);
  struct Stage {
    int expand, channels, repeats, stride;
  };
  const Stage stages[] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                          {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  for (const Stage& s : stages) {
    for (int i = 0; i < s.repeats; ++i) {
      const int stride = i == 0 ? s.stride : 1;
      const int in_channels = b.shape(cur).channels;
      const int hidden = in_channels * s.expand;
      int h = cur;
      if (s.expand != 1) h = conv_bn_relu(b, h, hidden, 1);
      h = b.relu(b.batchnorm(b.conv(h, hidden, 3, stride, 1, hidden)));
      h = b.batchnorm(b.conv(h, s.channels, 1));
      cur = (stride == 1 && in_channels == s.channels) ? b.add(h, cur) : h;
    }
  }
  cur = conv_bn_relu(b, cur, 1280, 1);
  cur = b.global_pool(cur);
  return b.finish(b.softmax(b.linear(cur, 1000)));
}

Fixture conv_pair() {
  GraphBuilder b(kCifar);
  const int c1 = b.conv(GraphBuilder::kInput, 64, 3);
  int cur = b.relu(c1);
  const int c2 = b.conv(cur, 128, 3);
  cur = b.relu(b.batchnorm(c2));
  cur = b.maxpool(cur, 2, 2);
  cur = conv_bn_relu(b, cur, 128, 3);
  cur = b.global_pool(cur);
  cur = b.softmax(b.linear(cur, 10));
  return {"conv_pair", b.finish(cur), {c2}};
}

}  // namespace

std::vector<std::string> fixture_names() {
  return {"vgg11", "vgg13", "resnet20", "resnet32", "vgg19", "resnet18", "mobilenet_v2", "conv_pair"};
}

std::vector<std::string> cifar_fixture_names() { return {"vgg11", "vgg13", "resnet20", "resnet32"}; }

Fixture make_fixture(std::string_view name, std::optional<std::uint64_t> weight_seed) {
  Fixture f;
  const int P = kPool;
  if (name == "vgg11") {
    f = {"vgg11", vgg({64, P, 128, P, 256, 256, P, 512, 512, P, 512, 512, P}, kCifar, {512}, 10), {}};
  } else if (name == "vgg13") {
    f = {"vgg13", vgg({64, 64, P, 128, 128, P, 256, 256, P, 512, 512, P, 512, 512, P}, kCifar, {512}, 10), {}};
  } else if (name == "vgg19") {
    f = {"vgg19",
         vgg({64, 64, P, 128, 128, P, 256, 256, 256, 256, P, 512, 512, 512, 512, P, 512, 512, 512, 512, P},
             kImageNet, {4096, 4096}, 1000),
         {}};
  } else if (name == "resnet20") {
    f = {"resnet20", cifar_resnet(3), {}};
  } else if (name == "resnet32") {
    f = {"resnet32", cifar_resnet(5), {}};
  } else if (name == "resnet18") {
    f = {"resnet18", resnet18(), {}};
  } else if (name == "mobilenet_v2") {
    f = {"mobilenet_v2", mobilenet_v2(), {}};
  } else if (name == "conv_pair") {
    f = conv_pair();
  } else {
    throw Error(ErrorCode::kConfig, fmt::format("unknown fixture '{}'", name));
  }
  if (f.target_layers.empty()) {
    for (const auto& [id, n] : f.graph.nodes()) {
      if (n.kind == OpKind::kConv2D) f.target_layers.push_back(id);
    }
  }
  if (weight_seed) randomize_weights(f.graph, *weight_seed);
  return f;
}

}  // namespace traceobf
