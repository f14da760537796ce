// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/cost_model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "text_util.hpp"
#include "traceobf/error.hpp"

namespace traceobf {

namespace {

constexpr double kBytes = 4.0;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

double clamp_pct(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

bool has_weight_matrix(OpKind k) { return k == OpKind::kConv2D || k == OpKind::kLinear; }

std::int64_t elements(const Node& n) { return n.shape->elements(); }

}  // namespace

std::vector<std::string> builtin_device_names() { return {"sim-turing", "sim-ampere"}; }

DeviceProfile builtin_device(std::string_view name) {
  DeviceProfile d;
  if (name == "sim-turing") return d;
  if (name == "sim-ampere") {
    d.name = "sim-ampere";
    d.macs_per_cycle = 2048.0;
    d.launch_overhead = 240.0;
    d.l1_bytes = 128.0 * 1024;
    d.l2_bytes = 4.0 * 1024 * 1024;
    d.dram_bytes_per_cycle = 384.0;
    d.l2_bytes_per_cycle = 2048.0;
    d.num_sms = 80;
    return d;
  }
  throw Error(ErrorCode::kConfig, fmt::format("unknown device profile '{}'", name));
}

DeviceProfile device_from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, fmt::format("device profile: {}", e.what()));
  }
  DeviceProfile d = builtin_device(j.value("base", std::string("sim-turing")));
  try {
    d.name = j.value("name", d.name);
    d.macs_per_cycle = j.value("macs_per_cycle", d.macs_per_cycle);
    d.launch_overhead = j.value("launch_overhead", d.launch_overhead);
    d.l1_bytes = j.value("l1_bytes", d.l1_bytes);
    d.l2_bytes = j.value("l2_bytes", d.l2_bytes);
    d.dram_bytes_per_cycle = j.value("dram_bytes_per_cycle", d.dram_bytes_per_cycle);
    d.l2_bytes_per_cycle = j.value("l2_bytes_per_cycle", d.l2_bytes_per_cycle);
    d.num_sms = j.value("num_sms", d.num_sms);
    d.full_occupancy_threads = j.value("full_occupancy_threads", d.full_occupancy_threads);
    d.reduction_chunk = j.value("reduction_chunk", d.reduction_chunk);
    d.max_accumulators = j.value("max_accumulators", d.max_accumulators);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, fmt::format("device profile: {}", e.what()));
  }
  if (d.macs_per_cycle <= 0 || d.launch_overhead <= 0 || d.l1_bytes <= 0 || d.l2_bytes <= 0 ||
      d.dram_bytes_per_cycle <= 0 || d.l2_bytes_per_cycle <= 0 || d.num_sms < 1 ||
      d.full_occupancy_threads < 1 || d.reduction_chunk < 1 || d.max_accumulators < 1) {
    throw Error(ErrorCode::kConfig, "device profile constants must be positive");
  }
  return d;
}

std::string device_to_json(const DeviceProfile& d) {
  nlohmann::ordered_json j;
  j["name"] = d.name;
  j["macs_per_cycle"] = d.macs_per_cycle;
  j["launch_overhead"] = d.launch_overhead;
  j["l1_bytes"] = d.l1_bytes;
  j["l2_bytes"] = d.l2_bytes;
  j["dram_bytes_per_cycle"] = d.dram_bytes_per_cycle;
  j["l2_bytes_per_cycle"] = d.l2_bytes_per_cycle;
  j["num_sms"] = d.num_sms;
  j["full_occupancy_threads"] = d.full_occupancy_threads;
  j["reduction_chunk"] = d.reduction_chunk;
  j["max_accumulators"] = d.max_accumulators;
  return j.dump(2) + "\n";
}

std::string_view case_name(LeakageCase c) {
  switch (c) {
    case LeakageCase::kA: return "A";
    case LeakageCase::kB: return "B";
    case LeakageCase::kC: return "C";
  }
  return "?";
}

std::optional<LeakageCase> parse_case(std::string_view name) {
  if (name == "A" || name == "a") return LeakageCase::kA;
  if (name == "B" || name == "b") return LeakageCase::kB;
  if (name == "C" || name == "c") return LeakageCase::kC;
  return std::nullopt;
}

std::size_t case_feature_count(LeakageCase c) {
  switch (c) {
    case LeakageCase::kA: return 1;
    case LeakageCase::kB: return 3;
    case LeakageCase::kC: return 9;
  }
  return 9;
}

Workload kernel_workload(const Graph& shaped, const Kernel& kernel) {
  const Node& a = shaped.node(kernel.anchor());
  const TensorShape out = *a.shape;
  auto input_shape = [&](const Node& n, std::size_t i) {
    return n.inputs.empty() ? shaped.input_shape() : *shaped.node(n.inputs[i]).shape;
  };
  Workload w;
  w.kind = a.kind;
  const std::int64_t spatial = static_cast<std::int64_t>(out.batch) * out.spatial();
  switch (a.kind) {
    case OpKind::kConv2D: {
      const Attrs& t = a.attrs;
      w.reducing = t.groups == 1;
      w.y = t.out_channels;
      w.x = spatial;
      w.r = static_cast<std::int64_t>(t.k1) * t.k2 * (t.in_channels / t.groups);
      w.input_bytes = static_cast<std::int64_t>(kBytes) * input_shape(a, 0).elements();
      w.weight_bytes = static_cast<std::int64_t>(kBytes) * w.r * t.out_channels;
      break;
    }
    case OpKind::kLinear:
      w.reducing = true;
      w.y = a.attrs.out_channels;
      w.x = out.batch;
      w.r = a.attrs.in_channels;
      w.input_bytes = static_cast<std::int64_t>(kBytes) * out.batch * a.attrs.in_channels;
      w.weight_bytes = static_cast<std::int64_t>(kBytes) * a.attrs.in_channels * a.attrs.out_channels;
      break;
    case OpKind::kMaxPool:
      w.y = out.channels;
      w.x = spatial;
      w.r = static_cast<std::int64_t>(a.attrs.window) * a.attrs.window;
      w.input_bytes = static_cast<std::int64_t>(kBytes) * input_shape(a, 0).elements();
      break;
    case OpKind::kSoftMax:
      w.y = out.channels;
      w.x = spatial;
      w.r = 3;
      w.input_bytes = static_cast<std::int64_t>(kBytes) * out.elements();
      break;
    case OpKind::kSlice:
      w.y = out.channels;
      w.x = spatial;
      w.r = 1;
      w.input_bytes = static_cast<std::int64_t>(kBytes) * out.elements();
      break;
    case OpKind::kConcat:
    case OpKind::kAdd:
    case OpKind::kReLU:
    case OpKind::kBatchNorm: {
      w.y = out.channels;
      w.x = spatial;
      w.r = a.kind == OpKind::kBatchNorm ? 2 : 1;
      const std::size_t arity = std::max<std::size_t>(a.inputs.size(), 1);
      for (std::size_t i = 0; i < arity; ++i) {
        w.input_bytes += static_cast<std::int64_t>(kBytes) * input_shape(a, i).elements();
      }
      if (a.kind == OpKind::kAdd && a.attrs.constant) {
        w.input_bytes += static_cast<std::int64_t>(kBytes) * out.elements();
      }
      if (a.kind == OpKind::kBatchNorm) w.weight_bytes = static_cast<std::int64_t>(kBytes) * 4 * out.channels;
      break;
    }
  }
  w.macs = w.y * w.x * w.r;
  for (std::size_t i = 1; i < kernel.nodes.size(); ++i) {
    const Node& f = shaped.node(kernel.nodes[i]);
    const std::int64_t n = elements(f);
    switch (f.kind) {
      case OpKind::kBatchNorm:
        w.fused_ops += 2 * n;
        w.fused_read_bytes += static_cast<std::int64_t>(kBytes) * 4 * f.shape->channels;
        break;
      case OpKind::kAdd:
        w.fused_ops += n;
        w.fused_read_bytes += static_cast<std::int64_t>(kBytes) * n;
        break;
      default:
        w.fused_ops += n;
        break;
    }
  }
  w.output_bytes = static_cast<std::int64_t>(kBytes) * elements(shaped.node(kernel.nodes.back()));
  return w;
}

TraceStep profile_kernel(const Workload& w, const Schedule& s, const DeviceProfile& d) {
  TraceStep step;
  if (w.macs == 0 && w.input_bytes == 0 && w.output_bytes == 0) return step;
  const std::int64_t y = std::max<std::int64_t>(w.y, 1);
  const std::int64_t x = std::max<std::int64_t>(w.x, 1);
  const std::int64_t r = std::max<std::int64_t>(w.r, 1);
  const std::int64_t yb = triple_product(s.tile_y);
  const std::int64_t xb = triple_product(s.tile_x);
  const std::int64_t yi = static_cast<std::int64_t>(s.tile_y[1]) * s.tile_y[2];
  const std::int64_t xi = static_cast<std::int64_t>(s.tile_x[1]) * s.tile_x[2];
  const std::int64_t blocks = ceil_div(y, yb) * ceil_div(x, xb);
  const std::int64_t rc = std::min<std::int64_t>(r, d.reduction_chunk);
  const std::int64_t chunks = ceil_div(r, rc);
  const bool matrix = has_weight_matrix(w.kind);

  const double pad = static_cast<double>(y * x) /
                     static_cast<double>(ceil_div(y, yb) * yb * ceil_div(x, xb) * xb);
  // Block tile size sets most of the efficiency; how the block is split
  // into threads, virtual threads and per-thread work only refines it.
  const double threads = static_cast<double>(s.tile_y[1]) * s.tile_x[1];
  double occupancy = 0.85 + 0.15 * std::min(1.0, threads / d.full_occupancy_threads);
  if (threads > 1024) occupancy *= 1024.0 / threads;
  const double ay = s.tile_y[2];
  const double ax = s.tile_x[2];
  const double intensity = w.reducing ? ay * ax / (ay + ax) : ay * ax;
  double ilp = 0.85 + 0.15 * intensity / (intensity + 1.0);
  if (ay * ax > d.max_accumulators) ilp *= d.max_accumulators / (ay * ax);
  const double vt = static_cast<double>(s.tile_y[0]) * s.tile_x[0];
  double vthread = 1.0 - 0.08 / vt;
  if (vt > 8) vthread *= 8.0 / vt;
  const double unroll = s.unroll >= 4 ? 1.0 : (s.unroll >= 2 ? 0.96 : 0.9);
  const std::int64_t waves = ceil_div(blocks, d.num_sms);
  const double sm = static_cast<double>(blocks) / static_cast<double>(waves * d.num_sms);

  const double w_tile = matrix ? static_cast<double>(yb * rc) : 0.0;
  const double i_tile = static_cast<double>(w.reducing ? xb * rc : yb * xb * rc);
  const double fp = kBytes * (w_tile + i_tile + static_cast<double>(yb * xb));
  const double fill = std::min(fp, d.l1_bytes) / d.l1_bytes;
  const double spill = fp > d.l1_bytes ? d.l1_bytes / fp : 1.0;
  const double eff = std::clamp(
      pad * occupancy * ilp * vthread * unroll * sm * (0.25 + 0.75 * std::sqrt(fill)) * spill, 1e-4, 1.0);

  const double reuse_x = w.reducing ? static_cast<double>(ceil_div(y, yi)) : 1.0;
  const double reuse_w = matrix ? static_cast<double>(ceil_div(x, xi)) : 1.0;
  const double dram_read = static_cast<double>(w.weight_bytes) * reuse_w +
                           static_cast<double>(w.input_bytes) * reuse_x +
                           static_cast<double>(w.fused_read_bytes);
  const double dram_write = static_cast<double>(w.output_bytes);
  const double compute = static_cast<double>(w.macs) / (d.macs_per_cycle * eff) +
                         static_cast<double>(w.fused_ops) / d.macs_per_cycle;
  const double memory = (dram_read + dram_write) / d.dram_bytes_per_cycle;
  const double cycles = compute + memory + d.launch_overhead;

  const double per_chunk = static_cast<double>(yb * xb * rc);
  const double loads_per_chunk =
      w.reducing ? per_chunk * (1.0 / ax + 1.0 / ay) : per_chunk * (1.0 + (matrix ? 1.0 / ax : 0.0));
  const double visits = static_cast<double>(blocks * chunks);
  const double loads = visits * loads_per_chunk;
  // Virtual threads revisit their strided sub-tiles; lines evicted in between
  // are fetched again once the block tile crowds L1.
  const double refetch = 1.0 + (vt - 1.0) * std::min(1.0, fp / d.l1_bytes);
  const double unique = visits * (w_tile + i_tile) * refetch;
  const double l1_hit = clamp_pct(100.0 * (1.0 - unique / loads), 5.0, 99.0);
  const double l1_tx = (kBytes * loads + static_cast<double>(w.fused_read_bytes)) / 32.0;
  const double l2_req = kBytes * loads * (1.0 - l1_hit / 100.0) +
                        static_cast<double>(w.fused_read_bytes) + dram_write;
  const double l2_hit = clamp_pct(100.0 * (1.0 - dram_read / std::max(l2_req, 1.0)), 5.0, 99.0);
  const double l2_util = clamp_pct(100.0 * l2_req / (cycles * d.l2_bytes_per_cycle), 0.0, 100.0);

  step.features = {cycles, dram_read, dram_write, l1_tx, 100.0 * eff, l1_hit, l2_req / 32.0, l2_util, l2_hit};
  return step;
}

void mask_step(TraceStep& step, LeakageCase leak) {
  for (std::size_t i = case_feature_count(leak); i < step.features.size(); ++i) step.features[i] = 0.0;
}

Trace profile_graph(const std::vector<Workload>& work, const std::vector<Schedule>& schedules,
                    const std::vector<std::optional<OpKind>>& labels, LeakageCase leak,
                    const DeviceProfile& device) {
  if (schedules.size() != work.size() || labels.size() != work.size()) {
    throw Error(ErrorCode::kPrecondition, "every kernel needs a schedule and a label slot");
  }
  Trace trace;
  trace.steps.reserve(work.size());
  for (std::size_t i = 0; i < work.size(); ++i) {
    TraceStep step = profile_kernel(work[i], schedules[i], device);
    step.label = labels[i];
    mask_step(step, leak);
    trace.total_latency += step.cycles();
    trace.steps.push_back(step);
  }
  return trace;
}

std::string encode_trace(const Trace& trace, LeakageCase leak, bool with_labels) {
  const std::size_t n = case_feature_count(leak);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ',';
    out += kFeatureNames[i];
  }
  if (with_labels) out += ",label";
  out += '\n';
  for (const TraceStep& step : trace.steps) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out += ',';
      out += detail::format_real(step.features[i]);
    }
    if (with_labels) {
      out += ',';
      out += step.label ? op_kind_name(*step.label) : std::string_view("none");
    }
    out += '\n';
  }
  return out;
}

TraceDocument decode_trace(std::string_view text, std::string_view source) {
  const auto rows = detail::lines(text);
  if (rows.empty()) throw ParseError(source, 1, "empty trace file");
  const auto header = detail::split(rows[0], ',');
  TraceDocument doc;
  std::size_t n = header.size();
  if (n > 0 && header.back() == "label") {
    doc.with_labels = true;
    --n;
  }
  if (n != 1 && n != 3 && n != 9) throw ParseError(source, 1, "header has an unsupported column count");
  for (std::size_t i = 0; i < n; ++i) {
    if (header[i] != kFeatureNames[i]) {
      throw ParseError(source, 1, fmt::format("expected column '{}', got '{}'", kFeatureNames[i], header[i]));
    }
  }
  doc.leak = n == 1 ? LeakageCase::kA : (n == 3 ? LeakageCase::kB : LeakageCase::kC);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const int line = static_cast<int>(r) + 1;
    if (rows[r].empty()) continue;
    const auto cells = detail::split(rows[r], ',');
    if (cells.size() != header.size()) throw ParseError(source, line, "wrong number of columns");
    TraceStep step;
    for (std::size_t i = 0; i < n; ++i) {
      auto v = detail::parse_number<double>(cells[i]);
      if (!v) throw ParseError(source, line, fmt::format("bad number '{}'", cells[i]));
      step.features[i] = *v;
    }
    if (doc.with_labels && cells.back() != "none") {
      auto kind = parse_op_kind(cells.back());
      if (!kind) throw ParseError(source, line, fmt::format("unknown label '{}'", cells.back()));
      step.label = *kind;
    }
    doc.trace.total_latency += step.cycles();
    doc.trace.steps.push_back(step);
  }
  return doc;
}

void save_trace(const Trace& trace, LeakageCase leak, bool with_labels,
                const std::filesystem::path& path) {
  detail::write_file(path, encode_trace(trace, leak, with_labels));
}

TraceDocument load_trace(const std::filesystem::path& path) {
  return decode_trace(detail::read_file(path), path.string());
}

}  // namespace traceobf
