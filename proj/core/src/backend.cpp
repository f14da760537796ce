// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/backend.hpp"

#include <map>
#include <mutex>
#include <utility>

#include <fmt/format.h>

namespace traceobf {

namespace {

using CacheKey = std::pair<Workload, DeviceProfile>;

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

std::map<CacheKey, Schedule>& cache() {
  static std::map<CacheKey, Schedule> c;
  return c;
}

CacheKey key_of(const Workload& w, const DeviceProfile& d) {
  return {w, d};
}

Schedule search(const Workload& w, const DeviceProfile& d) {
  const auto ys = candidate_triples(w.y);
  const auto xs = candidate_triples(w.x);
  Schedule best;
  double best_cycles = -1.0;
  Schedule s;
  for (const Triple& ty : ys) {
    s.tile_y = ty;
    for (const Triple& tx : xs) {
      s.tile_x = tx;
      for (int u : kUnrollDepths) {
        s.unroll = u;
        const double c = profile_kernel(w, s, d).cycles();
        if (best_cycles < 0.0 || c < best_cycles) {
          best_cycles = c;
          best = s;
        }
      }
    }
  }
  return best;
}

}  // namespace

Schedule default_schedule(const Workload& work, const DeviceProfile& device) {
  const CacheKey key = key_of(work, device);
  {
    std::lock_guard lock(cache_mutex());
    if (auto it = cache().find(key); it != cache().end()) return it->second;
  }
  const Schedule s = search(work, device);
  std::lock_guard lock(cache_mutex());
  cache().emplace(key, s);
  return s;
}

std::size_t schedule_cache_size() {
  std::lock_guard lock(cache_mutex());
  return cache().size();
}

void clear_schedule_cache() {
  std::lock_guard lock(cache_mutex());
  cache().clear();
}

CompiledModel compile(const Graph& graph, const BackendHints& hints, const DeviceProfile& device) {
  CompiledModel m;
  m.graph = infer_shapes(graph);
  m.kernels = fuse(m.graph, hints.fusion_limits);
  for (const Kernel& k : m.kernels) {
    const Workload w = kernel_workload(m.graph, k);
    Schedule s = default_schedule(w, device);
    if (auto it = hints.schedule_strategies.find(k.anchor()); it != hints.schedule_strategies.end()) {
      s = modify_schedule(s, it->second);
    }
    const OpKind kind = m.graph.node(k.anchor()).kind;
    m.workloads.push_back(w);
    m.schedules.push_back(s);
    m.labels.push_back(is_complex(kind) ? std::optional<OpKind>(kind) : std::nullopt);
  }
  return m;
}

Trace profile(const CompiledModel& model, LeakageCase leak, const DeviceProfile& device) {
  Trace t = profile_graph(model.workloads, model.schedules, model.labels, leak, device);
  for (std::size_t i = 0; i < t.steps.size(); ++i) t.steps[i].anchor = model.kernels[i].anchor();
  return t;
}

Trace profile_graph(const Graph& graph, const BackendHints& hints, LeakageCase leak,
                    const DeviceProfile& device) {
  return profile(compile(graph, hints, device), leak, device);
}

std::string encode_schedule_dump(const CompiledModel& model) {
  std::string out = "kernel\tanchor\ttile_y\ttile_x\tunroll\tstrategy\n";
  for (std::size_t i = 0; i < model.kernels.size(); ++i) {
    const Schedule& s = model.schedules[i];
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", i, model.kernels[i].anchor(),
                       format_triple(s.tile_y), format_triple(s.tile_x), s.unroll, s.strategy);
  }
  return out;
}

}  // namespace traceobf
