// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/arch_gen.hpp"

#include <array>
#include <cmath>

#include "traceobf/builder.hpp"
#include "traceobf/error.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {

namespace {

constexpr std::array<int, 10> kChannels = {16, 24, 32, 48, 64, 96, 128, 160, 192, 256};
constexpr std::array<int, 5> kNeurons = {64, 128, 256, 512, 1024};
constexpr std::array<int, 4> kKernels = {1, 3, 3, 5};

enum class Block { kPlain, kResidual, kDepthwise, kPool, kBatchNorm };

template <typename T, std::size_t N>
T pick(Rng& rng, const std::array<T, N>& options) {
  return options[rng.index(N)];
}

Block draw_block(Rng& rng, const BlockMix& mix) {
  double u = rng.uniform();
  if ((u -= mix.plain) < 0) return Block::kPlain;
  if ((u -= mix.residual) < 0) return Block::kResidual;
  if ((u -= mix.depthwise) < 0) return Block::kDepthwise;
  if ((u -= mix.pool) < 0) return Block::kPool;
  return Block::kBatchNorm;
}

class ArchWriter {
 public:
  ArchWriter(const ArchGenConfig& config, Rng& rng) : b_(config.input_shape), rng_(rng) {}

  int channels() const { return b_.shape(x_).channels; }
  int extent() const { return b_.shape(x_).height; }

  void stem() {
    x_ = b_.conv(x_, pick(rng_, std::array<int, 2>{32, 64}), 7, 2);
    x_ = b_.relu(b_.batchnorm(x_));
    x_ = b_.maxpool(x_, 2, 2);
  }

  int stride() { return extent() >= 8 && rng_.bernoulli(0.1) ? 2 : 1; }

  void plain(bool with_bn) {
    const int k = with_bn ? 3 : pick(rng_, kKernels);
    x_ = b_.conv(x_, pick(rng_, kChannels), k, stride());
    if (with_bn) x_ = b_.batchnorm(x_);
    x_ = b_.relu(x_);
  }

  void residual() {
    // The shortcut needs a node to read from.
    if (x_ == GraphBuilder::kInput) return plain(true);
    const int in = x_;
    const int out = rng_.bernoulli(0.5) ? channels() : pick(rng_, kChannels);
    const int s = stride();
    int y = b_.relu(b_.batchnorm(b_.conv(in, out, 3, s)));
    y = b_.batchnorm(b_.conv(y, out, 3));
    int shortcut = in;
    if (out != channels() || s != 1) shortcut = b_.batchnorm(b_.conv(in, out, 1, s));
    x_ = b_.relu(b_.add(y, shortcut));
  }

  void depthwise() {
    if (x_ == GraphBuilder::kInput) return plain(true);
    const int ch = channels();
    x_ = b_.relu(b_.batchnorm(b_.conv(x_, ch, 3, stride(), -1, ch)));
    x_ = b_.relu(b_.conv(x_, pick(rng_, kChannels), 1));
  }

  void pool() { x_ = b_.maxpool(x_, 2, 2); }

  Graph head(int num_classes) {
    while (extent() > 4) pool();
    const int hidden = static_cast<int>(rng_.uniform_int(0, 2));
    for (int i = 0; i < hidden; ++i) x_ = b_.relu(b_.linear(x_, pick(rng_, kNeurons)));
    x_ = b_.softmax(b_.linear(x_, num_classes));
    return b_.finish(x_);
  }

 private:
  GraphBuilder b_;
  Rng& rng_;
  int x_ = GraphBuilder::kInput;
};

}  // namespace

ArchGenConfig cifar_arch_config(std::uint64_t seed) {
  ArchGenConfig c;
  c.seed = seed;
  return c;
}

ArchGenConfig imagenet_arch_config(std::uint64_t seed) {
  ArchGenConfig c;
  c.input_shape = {1, 3, 224, 224};
  c.num_classes = 1000;
  c.seed = seed;
  return c;
}

void check_arch_config(const ArchGenConfig& config) {
  const BlockMix& m = config.block_mix;
  const double parts[] = {m.plain, m.residual, m.depthwise, m.pool, m.batchnorm};
  double total = 0.0;
  for (double p : parts) {
    if (p < 0.0) throw Error(ErrorCode::kConfig, "block probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::kConfig, "block probabilities must sum to 1");
  if (m.pool >= 1.0) throw Error(ErrorCode::kConfig, "at least one convolution block needs positive probability");
  if (config.min_depth < 3 || config.max_depth < config.min_depth) {
    throw Error(ErrorCode::kConfig, "depth range must satisfy 3 <= min <= max");
  }
  if (!config.input_shape.valid() || config.num_classes < 1) {
    throw Error(ErrorCode::kConfig, "input shape and class count must be positive");
  }
}

Graph generate_random_arch(const ArchGenConfig& config) {
  check_arch_config(config);
  Rng rng(config.seed);
  ArchWriter w(config, rng);
  if (config.input_shape.height >= 128) w.stem();
  int remaining = static_cast<int>(rng.uniform_int(config.min_depth, config.max_depth));
  while (remaining > 0) {
    switch (draw_block(rng, config.block_mix)) {
      case Block::kPlain: w.plain(false); break;
      case Block::kBatchNorm: w.plain(true); break;
      case Block::kResidual: w.residual(); break;
      case Block::kDepthwise: w.depthwise(); break;
      case Block::kPool:
        if (w.extent() >= 8) w.pool();
        continue;
    }
    --remaining;
  }
  return w.head(config.num_classes);
}

}  // namespace traceobf
