// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Compilation of a graph into profiled kernels: fusion, default schedule
// search and schedule modification.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "traceobf/cost_model.hpp"
#include "traceobf/fusion.hpp"
#include "traceobf/schedule.hpp"
#include "traceobf/transforms.hpp"

namespace traceobf {

// Exhaustive search over candidate_triples x candidate_triples x unroll
// depths for minimum cycles; ties keep the lexicographically smallest
// schedule. Results are cached per (workload, device) and the cache is safe
// to share between threads.
Schedule default_schedule(const Workload& work, const DeviceProfile& device);

std::size_t schedule_cache_size();
void clear_schedule_cache();

struct CompiledModel {
  Graph graph;  // shapes inferred
  std::vector<Kernel> kernels;
  std::vector<Workload> workloads;
  std::vector<Schedule> schedules;
  std::vector<std::optional<OpKind>> labels;
};

CompiledModel compile(const Graph& graph, const BackendHints& hints, const DeviceProfile& device);

Trace profile(const CompiledModel& model, LeakageCase leak, const DeviceProfile& device);

// Convenience: compile with `hints` and profile in one call.
Trace profile_graph(const Graph& graph, const BackendHints& hints, LeakageCase leak,
                    const DeviceProfile& device);

// One line per kernel: index, anchor id, tile_y, tile_x, unroll, strategy.
std::string encode_schedule_dump(const CompiledModel& model);

}  // namespace traceobf
