// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace traceobf {

// Split factors of one loop below the outermost (block) level, which is
// always -1: (virtual threads, threads, per-thread extent).
using Triple = std::array<int, 3>;

// Tile-Y splits the output-channel loop, Tile-X the spatial loop.
struct Schedule {
  Triple tile_y{1, 1, 1};
  Triple tile_x{1, 1, 1};
  int unroll = 1;
  int strategy = 0;

  friend bool operator==(const Schedule&, const Schedule&) = default;
  friend auto operator<=>(const Schedule&, const Schedule&) = default;
};

inline constexpr std::array<int, 6> kTileFactors = {1, 2, 4, 8, 16, 32};
inline constexpr std::array<int, 3> kUnrollDepths = {1, 2, 4};
inline constexpr int kMaxStrategy = 3;

inline int triple_product(const Triple& t) { return t[0] * t[1] * t[2]; }

// Smallest power of two >= extent.
std::int64_t next_pow2(std::int64_t extent);

// Triples over kTileFactors with product <= next_pow2(extent), in
// lexicographic order.
std::vector<Triple> candidate_triples(std::int64_t extent);

// Most balanced (a, b) with a * b == product and a <= b.
std::array<int, 2> balanced_split(int product);

// Strategy k in 1..3 forces factor k-1 of both triples to 1 and rebalances
// the product over the other two factors. Strategy 0 is the identity.
// Throws Error(kInvalidStrategy).
Schedule modify_schedule(const Schedule& schedule, int strategy);

// "[-1,4,8,4]"
std::string format_triple(const Triple& t);

}  // namespace traceobf
