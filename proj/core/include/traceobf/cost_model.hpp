// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic analytical device model: maps a kernel and its schedule to
// the hardware counters a profiler would report.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traceobf/fusion.hpp"
#include "traceobf/graph.hpp"
#include "traceobf/schedule.hpp"

namespace traceobf {

struct DeviceProfile {
  std::string name = "sim-turing";
  double macs_per_cycle = 1024.0;
  double launch_overhead = 300.0;
  double l1_bytes = 64.0 * 1024;
  double l2_bytes = 1024.0 * 1024;
  double dram_bytes_per_cycle = 512.0;
  double l2_bytes_per_cycle = 1024.0;
  int num_sms = 40;
  int full_occupancy_threads = 64;
  int reduction_chunk = 32;
  int max_accumulators = 64;

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
  friend auto operator<=>(const DeviceProfile&, const DeviceProfile&) = default;
};

// Built-in profiles: "sim-turing" (default) and "sim-ampere".
std::vector<std::string> builtin_device_names();
DeviceProfile builtin_device(std::string_view name);
DeviceProfile device_from_json(std::string_view json_text);
std::string device_to_json(const DeviceProfile& device);

enum class LeakageCase : std::uint8_t { kA, kB, kC };

std::string_view case_name(LeakageCase c);
std::optional<LeakageCase> parse_case(std::string_view name);

inline constexpr std::array<std::string_view, 9> kFeatureNames = {
    "cycles", "dram_read", "dram_write", "l1_tx", "l1_util", "l1_hit", "l2_tx", "l2_util", "l2_hit"};

// Number of leading feature columns visible in a case: 1, 3 or 9.
std::size_t case_feature_count(LeakageCase c);

struct TraceStep {
  std::array<double, 9> features{};  // indexed as kFeatureNames
  std::optional<OpKind> label;       // anchor kind for complex-anchored kernels
  int anchor = -1;                   // not exported

  double cycles() const { return features[0]; }
  double dram_read() const { return features[1]; }
  double dram_write() const { return features[2]; }
  double l1_hit() const { return features[5]; }
  double l2_hit() const { return features[8]; }
};

struct Trace {
  std::vector<TraceStep> steps;
  double total_latency = 0.0;
};

// Per-kernel work description derived from shapes.
struct Workload {
  OpKind kind = OpKind::kReLU;
  bool reducing = false;  // output channels contract over all input channels
  std::int64_t y = 0;     // output-channel extent
  std::int64_t x = 0;     // batch * output spatial extent
  std::int64_t r = 0;     // reduction length per output element
  std::int64_t macs = 0;
  std::int64_t input_bytes = 0;
  std::int64_t weight_bytes = 0;
  std::int64_t output_bytes = 0;
  std::int64_t fused_read_bytes = 0;
  std::int64_t fused_ops = 0;

  friend bool operator==(const Workload&, const Workload&) = default;
  friend auto operator<=>(const Workload&, const Workload&) = default;
};

// `shaped` must carry inferred shapes.
Workload kernel_workload(const Graph& shaped, const Kernel& kernel);

// Unmasked counters for one kernel; an empty workload yields an all-zero step.
TraceStep profile_kernel(const Workload& work, const Schedule& schedule,
                         const DeviceProfile& device);

// Execution-order steps with fields outside `leak` zeroed; total latency is
// the sum of step cycles.
Trace profile_graph(const std::vector<Workload>& work, const std::vector<Schedule>& schedules,
                    const std::vector<std::optional<OpKind>>& labels, LeakageCase leak,
                    const DeviceProfile& device);

void mask_step(TraceStep& step, LeakageCase leak);

// Delimited text with header "cycles[,dram_read,dram_write][,l1_tx,...][,label]".
std::string encode_trace(const Trace& trace, LeakageCase leak, bool with_labels);
struct TraceDocument {
  Trace trace;
  LeakageCase leak = LeakageCase::kC;
  bool with_labels = false;
};

// Reads the case and label presence back from the header row.
TraceDocument decode_trace(std::string_view text, std::string_view source = "<trace>");
void save_trace(const Trace& trace, LeakageCase leak, bool with_labels,
                const std::filesystem::path& path);
TraceDocument load_trace(const std::filesystem::path& path);

}  // namespace traceobf
