// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/plan.hpp"

#include <fmt/format.h>

#include "text_util.hpp"

namespace traceobf {

namespace {

constexpr std::string_view kHeader = "traceobf-plan 1";
constexpr std::array<std::string_view, 5> kBranchNames = {"none", "in2", "in4", "out2", "out4"};

}  // namespace

std::string_view branching_name(Branching b) { return kBranchNames[static_cast<std::size_t>(b)]; }

std::optional<Branching> parse_branching(std::string_view name) {
  for (std::size_t i = 0; i < kBranchNames.size(); ++i) {
    if (kBranchNames[i] == name) return static_cast<Branching>(i);
  }
  return std::nullopt;
}

std::string_view plan_mode_name(PlanMode mode) {
  return mode == PlanMode::kSequence ? "sequence" : "dimension";
}

std::optional<PlanMode> parse_plan_mode(std::string_view name) {
  if (name == "sequence") return PlanMode::kSequence;
  if (name == "dimension") return PlanMode::kDimension;
  return std::nullopt;
}

bool LayerKnobs::is_identity() const {
  return branching == Branching::kNone && deepen == 0 && skip == 0 && widen_factor == 1.0 &&
         kernel_widen == 0 && dummy_count == 0 && fusion_limit == kUnlimitedFusion &&
         schedule_strategy == 0;
}

std::vector<int> complex_layers(const Graph& graph) {
  std::vector<int> out;
  for (int id : topo_order(graph)) {
    if (is_complex(graph.node(id).kind)) out.push_back(id);
  }
  return out;
}

ObfuscationPlan identity_plan(const Graph& vanilla, PlanMode mode) {
  ObfuscationPlan plan{mode, {}};
  for (int id : complex_layers(vanilla)) {
    LayerKnobs k;
    k.layer_id = id;
    plan.entries.push_back(k);
  }
  return plan;
}

namespace {

std::string knob_fields(const LayerKnobs& k, char sep, bool named) {
  auto field = [named](std::string_view key, const std::string& v) {
    return named ? fmt::format("{}={}", key, v) : v;
  };
  const std::string parts[] = {
      field("branching", std::string(branching_name(k.branching))),
      field("deepen", std::to_string(k.deepen)),
      field("skip", std::to_string(k.skip)),
      field("widen", detail::format_real(k.widen_factor)),
      field("kernel_widen", std::to_string(k.kernel_widen)),
      field("dummy", std::to_string(k.dummy_count)),
      field("fusion", std::to_string(k.fusion_limit)),
      field("strategy", std::to_string(k.schedule_strategy)),
  };
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

std::string encode_plan(const ObfuscationPlan& plan) {
  std::string out(kHeader);
  out += fmt::format("\nmode {}\n", plan_mode_name(plan.mode));
  for (const LayerKnobs& k : plan.entries) {
    out += fmt::format("layer {} {}\n", k.layer_id, knob_fields(k, ' ', true));
  }
  return out;
}

std::string encode_plan_inline(const ObfuscationPlan& plan) {
  std::string out;
  for (const LayerKnobs& k : plan.entries) {
    if (!out.empty()) out += ';';
    out += fmt::format("{}:{}", k.layer_id, knob_fields(k, '/', false));
  }
  return out;
}

ObfuscationPlan decode_plan(std::string_view text, std::string_view source) {
  const auto all = detail::lines(text);
  if (all.empty() || all[0] != kHeader) throw ParseError(source, 1, "missing 'traceobf-plan 1' header");
  ObfuscationPlan plan;
  bool have_mode = false;
  for (std::size_t i = 1; i < all.size(); ++i) {
    const int line = static_cast<int>(i) + 1;
    const auto tok = detail::tokens(all[i]);
    if (tok.empty() || tok[0].front() == '#') continue;
    auto fail = [&](const std::string& msg) { throw ParseError(source, line, msg); };
    auto to_int = [&](std::string_view v) {
      auto n = detail::parse_number<int>(v);
      if (!n) fail(fmt::format("expected integer, got '{}'", v));
      return *n;
    };
    if (tok[0] == "mode") {
      if (tok.size() != 2) fail("mode needs one value");
      auto m = parse_plan_mode(tok[1]);
      if (!m) fail(fmt::format("unknown mode '{}'", tok[1]));
      plan.mode = *m;
      have_mode = true;
    } else if (tok[0] == "layer") {
      if (tok.size() < 2) fail("layer record needs an id");
      LayerKnobs k;
      k.layer_id = to_int(tok[1]);
      for (std::size_t t = 2; t < tok.size(); ++t) {
        const auto eq = tok[t].find('=');
        if (eq == std::string_view::npos) fail(fmt::format("malformed field '{}'", tok[t]));
        const auto key = tok[t].substr(0, eq);
        const auto val = tok[t].substr(eq + 1);
        if (key == "branching") {
          auto b = parse_branching(val);
          if (!b) fail(fmt::format("unknown branching '{}'", val));
          k.branching = *b;
        } else if (key == "deepen") {
          k.deepen = to_int(val);
        } else if (key == "skip") {
          k.skip = to_int(val);
        } else if (key == "widen") {
          auto f = detail::parse_number<double>(val);
          if (!f) fail(fmt::format("bad widen factor '{}'", val));
          k.widen_factor = *f;
        } else if (key == "kernel_widen") {
          k.kernel_widen = to_int(val);
        } else if (key == "dummy") {
          k.dummy_count = to_int(val);
        } else if (key == "fusion") {
          k.fusion_limit = to_int(val);
        } else if (key == "strategy") {
          k.schedule_strategy = to_int(val);
        } else {
          fail(fmt::format("unknown field '{}'", key));
        }
      }
      if (k.deepen < 0 || k.deepen > 1 || k.skip < 0 || k.skip > 1) fail("deepen and skip must be 0 or 1");
      if (k.kernel_widen < 0 || k.dummy_count < 0) fail("counts must be non-negative");
      if (k.fusion_limit < kUnlimitedFusion) fail("fusion limit must be -1 or non-negative");
      if (k.schedule_strategy < 0 || k.schedule_strategy > 3) fail("strategy must be in 0..3");
      plan.entries.push_back(k);
    } else {
      fail(fmt::format("unknown record '{}'", tok[0]));
    }
  }
  if (!have_mode) throw ParseError(source, static_cast<int>(all.size()), "missing mode record");
  return plan;
}

void save_plan(const ObfuscationPlan& plan, const std::filesystem::path& path) {
  detail::write_file(path, encode_plan(plan));
}

ObfuscationPlan load_plan(const std::filesystem::path& path) {
  return decode_plan(detail::read_file(path), path.string());
}

}  // namespace traceobf
