// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/schedule.hpp"

#include <cstdlib>

#include <fmt/format.h>

#include "traceobf/error.hpp"

namespace traceobf {

std::int64_t next_pow2(std::int64_t extent) {
  std::int64_t p = 1;
  while (p < extent) p <<= 1;
  return p;
}

std::vector<Triple> candidate_triples(std::int64_t extent) {
  const std::int64_t cap = next_pow2(std::max<std::int64_t>(extent, 1));
  std::vector<Triple> out;
  for (int a : kTileFactors) {
    for (int b : kTileFactors) {
      for (int c : kTileFactors) {
        if (static_cast<std::int64_t>(a) * b * c <= cap) out.push_back({a, b, c});
      }
    }
  }
  return out;
}

std::array<int, 2> balanced_split(int product) {
  std::array<int, 2> best{1, product};
  for (int a = 1; static_cast<long long>(a) * a <= product; ++a) {
    if (product % a == 0) best = {a, product / a};
  }
  return best;
}

Schedule modify_schedule(const Schedule& schedule, int strategy) {
  if (strategy < 0 || strategy > kMaxStrategy) {
    throw Error(ErrorCode::kInvalidStrategy,
                fmt::format("schedule strategy {} is outside 0..{}", strategy, kMaxStrategy));
  }
  Schedule out = schedule;
  out.strategy = strategy;
  if (strategy == 0) return out;
  const int forced = strategy - 1;
  auto rebalance = [forced](Triple& t) {
    const auto [a, b] = balanced_split(triple_product(t));
    t[forced] = 1;
    int slot = 0;
    for (int i = 0; i < 3; ++i) {
      if (i == forced) continue;
      t[i] = slot++ == 0 ? a : b;
    }
  };
  rebalance(out.tile_y);
  rebalance(out.tile_x);
  return out;
}

std::string format_triple(const Triple& t) { return fmt::format("[-1,{},{},{}]", t[0], t[1], t[2]); }

}  // namespace traceobf
