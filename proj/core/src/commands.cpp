// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/commands.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "text_util.hpp"
#include "traceobf/error.hpp"
#include "traceobf/fixtures.hpp"
#include "traceobf/graph_io.hpp"
#include "traceobf/transforms.hpp"

namespace traceobf {

namespace {

constexpr std::string_view kFixturePrefix = "fixture:";

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

CompiledModel compile_planned(const Graph& vanilla, const std::optional<ObfuscationPlan>& plan,
                              const DeviceProfile& device) {
  if (!plan) return compile(vanilla, BackendHints{}, device);
  const PlannedGraph pg = apply_plan(vanilla, *plan);
  return compile(pg.graph, pg.hints, device);
}

std::vector<int> conv_layers(const Graph& graph) {
  std::vector<int> out;
  for (int id : complex_layers(graph)) {
    if (graph.node(id).kind == OpKind::kConv2D) out.push_back(id);
  }
  return out;
}

std::string encode_report(const ObfuscateReport& r, const RunConfig& config) {
  const FitnessReport& b = r.best;
  nlohmann::ordered_json j;
  j["graph"] = r.graph_name;
  j["mode"] = std::string(plan_mode_name(b.plan.mode));
  j["leakage_case"] = std::string(case_name(config.eval_case));
  j["budget"] = b.budget;
  j["epsilon"] = b.epsilon;
  j["feasible"] = b.feasible;
  j["clean_latency"] = b.clean_latency;
  j["latency"] = b.latency;
  j["overhead"] = b.feasible ? b.latency / b.clean_latency - 1.0 : 0.0;
  j["clean_metric"] = r.clean_metric;
  j["metrics"] = b.metrics;
  j["mean_metric"] = b.mean_metric;
  j["reward"] = b.reward;
  j["infeasible_budget"] = r.infeasible_budget;
  j["plan"] = encode_plan_inline(b.plan);
  return j.dump(2) + "\n";
}

}  // namespace

GraphSource load_graph_source(std::string_view spec) {
  if (spec.substr(0, kFixturePrefix.size()) == kFixturePrefix) {
    Fixture f = make_fixture(spec.substr(kFixturePrefix.size()));
    return {f.name, std::move(f.graph), std::move(f.target_layers)};
  }
  const std::filesystem::path path(spec);
  return {path.stem().string(), load_graph(path), {}};
}

std::filesystem::path model_path(const std::filesystem::path& dir, PlanMode family, LeakageCase leak) {
  const char* prefix = family == PlanMode::kSequence ? "seq" : "dim";
  return dir / fmt::format("{}_{}.model", prefix, case_name(leak));
}

Evaluator load_evaluator(const RunConfig& config, PlanMode mode, LeakageCase leak,
                         std::vector<int> target_layers) {
  const std::filesystem::path path = model_path(config.models_dir, mode, leak);
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingModels,
                fmt::format("{} not found; run 'traceobf train' first", path.string()));
  }
  Evaluator ev;
  ev.mode = mode;
  ev.device = resolve_device(config);
  ev.target_layers = std::move(target_layers);
  const std::string text = detail::read_file(path);
  if (mode == PlanMode::kSequence) {
    ev.seq = std::make_shared<SeqPredictor>(SeqPredictor::decode(text, path.string()));
  } else {
    ev.dim = std::make_shared<DimRegressor>(DimRegressor::decode(text, path.string()));
  }
  if (ev.leak() != leak) {
    throw Error(ErrorCode::kMissingModels, fmt::format("{} holds a case {} model", path.string(),
                                                       case_name(ev.leak())));
  }
  return ev;
}

TrainReport cmd_train(const RunConfig& config) {
  check_config(config);
  const DeviceProfile device = resolve_device(config);
  ArchGenConfig arch = config.arch_family == "imagenet" ? imagenet_arch_config(config.seed)
                                                        : cifar_arch_config(config.seed);
  const TraceDataset full = build_dataset(config.train_archs, arch, LeakageCase::kC, config.seed, device);
  std::filesystem::create_directories(config.models_dir);

  SeqTrainParams seq = config.seq;
  seq.seed = derive_seed(config.seed, 1);
  DimTrainParams dim = config.dim;
  dim.seed = derive_seed(config.seed, 2);

  TrainReport report;
  for (LeakageCase leak : config.cases) {
    const TraceDataset data = restrict_case(full, leak);
    if (!config.dataset_dir.empty()) save_dataset(data, config.dataset_dir / fmt::format("case_{}", case_name(leak)));
    const DatasetSplit split = split_dataset(data);
    const SeqPredictor s = SeqPredictor::train(split.train, leak, seq);
    const DimRegressor d = DimRegressor::train(split.train, leak, dim);
    const std::filesystem::path sp = model_path(config.models_dir, PlanMode::kSequence, leak);
    const std::filesystem::path dp = model_path(config.models_dir, PlanMode::kDimension, leak);
    detail::write_file(sp, s.encode());
    detail::write_file(dp, d.encode());
    report.files.push_back(sp);
    report.files.push_back(dp);
    TrainedCase tc{leak, 0.0, 0.0};
    if (!split.validation.empty()) {
      tc.validation_ler = validation_ler(s, split.validation);
      tc.validation_der = validation_der(d, split.validation);
    }
    report.cases.push_back(tc);
  }
  return report;
}

ObfuscateReport cmd_obfuscate(const RunConfig& config, std::string_view graph) {
  check_config(config);
  GraphSource src = load_graph_source(graph);
  const std::vector<int> targets = config.target_layers.empty() ? src.target_layers : config.target_layers;
  const Evaluator ev = load_evaluator(config, config.mode, config.eval_case, targets);
  GaParams ga = config.ga;
  ga.seed = config.seed;

  ObfuscateReport r;
  r.graph_name = src.name;
  const double clean = clean_latency(src.graph, ev.device);
  r.clean_metric = fitness(identity_plan(src.graph, config.mode), src.graph, ev, config.budget, clean, ga.epsilon)
                       .mean_metric;
  const GaResult result = run_ga(src.graph, config.mode, config.budget, ga, ev);
  r.best = result.best;
  r.infeasible_budget = std::none_of(result.log.begin(), result.log.end(), [&](const GaCandidate& c) {
    return c.report.feasible && c.report.latency <= (1.0 + 2.0 * config.budget) * clean * (1.0 + 1e-12);
  });

  std::filesystem::create_directories(config.output_dir);
  const std::filesystem::path dir = config.output_dir;
  const PlannedGraph pg = apply_plan(src.graph, r.best.plan);
  save_graph(pg.graph, dir / "obfuscated.graph");
  save_plan(r.best.plan, dir / "plan.txt");
  detail::write_file(dir / "schedules.txt", encode_schedule_dump(compile(pg.graph, pg.hints, ev.device)));
  detail::write_file(dir / "report.json", encode_report(r, config));
  detail::write_file(dir / "generations.tsv", encode_generation_log(result));
  r.files = {dir / "obfuscated.graph", dir / "plan.txt", dir / "schedules.txt", dir / "report.json",
             dir / "generations.tsv"};
  return r;
}

EvaluateReport cmd_evaluate(const RunConfig& config, std::string_view graph,
                            const std::optional<ObfuscationPlan>& plan) {
  check_config(config);
  const GraphSource src = load_graph_source(graph);
  const DeviceProfile device = resolve_device(config);
  const CompiledModel model = compile_planned(src.graph, plan, device);
  const std::vector<int> up = upstream_kernels(model);
  std::vector<int> targets = config.target_layers.empty() ? src.target_layers : config.target_layers;
  if (targets.empty()) targets = conv_layers(src.graph);

  EvaluateReport report;
  report.graph_name = src.name;
  for (LeakageCase leak : config.cases) {
    const bool has_seq = std::filesystem::exists(model_path(config.models_dir, PlanMode::kSequence, leak));
    const bool has_dim = std::filesystem::exists(model_path(config.models_dir, PlanMode::kDimension, leak));
    if (!has_seq && !has_dim) continue;
    const Trace trace = profile(model, leak, device);
    report.latency = trace.total_latency;
    CaseEvaluation ce;
    ce.leak = leak;
    if (has_seq) {
      const Evaluator ev = load_evaluator(config, PlanMode::kSequence, leak, {});
      const LabelSequence truth = label_sequence(src.graph);
      std::vector<double> lers;
      for (std::size_t m = 0; m < ev.seq->members(); ++m) lers.push_back(ler(ev.seq->predict(trace, m), truth));
      ce.mean_ler = mean(lers);
      ce.ler = std::move(lers);
    }
    if (has_dim) {
      const Evaluator ev = load_evaluator(config, PlanMode::kDimension, leak, {});
      std::vector<double> per_layer;
      for (int id : targets) {
        const Node& n = src.graph.node(id);
        if (n.kind != OpKind::kConv2D) {
          throw Error(ErrorCode::kPrecondition, fmt::format("target {} is not a Conv2D layer", id));
        }
        // A branched layer issues no kernel of its own.
        const auto anchored = std::find_if(model.kernels.begin(), model.kernels.end(),
                                           [id](const Kernel& k) { return k.anchor() == id; });
        if (anchored == model.kernels.end()) continue;
        const int step = anchored->index;
        LayerDimensions ld;
        ld.layer_id = id;
        ld.truth = Dims{n.attrs.in_channels, n.attrs.out_channels};
        std::vector<double> ders;
        for (std::size_t m = 0; m < ev.dim->members(); ++m) {
          ld.predicted.push_back(predict_dims(*ev.dim, trace, static_cast<std::size_t>(step), up[step], m));
          ders.push_back(der(ld.predicted.back(), ld.truth));
        }
        ld.der = mean(ders);
        per_layer.push_back(ld.der);
        ce.layers.push_back(std::move(ld));
      }
      ce.mean_der = mean(per_layer);
    }
    report.cases.push_back(std::move(ce));
  }
  if (report.cases.empty()) {
    throw Error(ErrorCode::kMissingModels,
                fmt::format("no models for the configured cases in {}", config.models_dir.string()));
  }
  return report;
}

std::string format_evaluation(const EvaluateReport& r) {
  std::string out = fmt::format("graph {} latency {:.0f} cycles\n", r.graph_name, r.latency);
  for (const CaseEvaluation& c : r.cases) {
    if (c.ler) {
      out += fmt::format("case {} LER mean {:.4f} members", case_name(c.leak), c.mean_ler);
      for (double v : *c.ler) out += fmt::format(" {:.4f}", v);
      out += '\n';
    }
    if (!c.layers.empty()) {
      out += fmt::format("case {} DER mean {:.4f}\n", case_name(c.leak), c.mean_der);
      for (const LayerDimensions& l : c.layers) {
        out += fmt::format("  layer {} truth {}->{} DER {:.4f} predicted", l.layer_id, l.truth.c, l.truth.j, l.der);
        for (const Dims& d : l.predicted) out += fmt::format(" {}->{}", d.c, d.j);
        out += '\n';
      }
    }
  }
  return out;
}

Trace cmd_profile(const RunConfig& config, std::string_view graph, LeakageCase leak,
                  const std::optional<ObfuscationPlan>& plan, const std::filesystem::path& out,
                  bool with_labels) {
  const GraphSource src = load_graph_source(graph);
  const DeviceProfile device = resolve_device(config);
  const Trace trace = profile(compile_planned(src.graph, plan, device), leak, device);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_trace(trace, leak, with_labels, out);
  return trace;
}

BenchReport cmd_bench(const RunConfig& config) {
  check_config(config);
  BenchReport report;
  report.mode = config.mode;
  for (const std::string& name : config.bench_fixtures) {
    const Fixture f = make_fixture(name);
    const std::vector<int> targets = config.target_layers.empty() ? f.target_layers : config.target_layers;
    const Evaluator ev = load_evaluator(config, config.mode, config.eval_case, targets);
    for (double budget : config.bench_budgets) {
      BenchRow row;
      row.fixture = name;
      row.budget = budget;
      for (int r = 0; r < config.bench_repeats; ++r) {
        GaParams ga = config.ga;
        ga.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
        const GaResult res = run_ga(f.graph, config.mode, budget, ga, ev);
        row.metrics.push_back(res.best.mean_metric);
        row.overheads.push_back(res.best.feasible ? res.best.latency / res.best.clean_latency - 1.0 : 0.0);
      }
      row.mean_metric = mean(row.metrics);
      row.mean_overhead = mean(row.overheads);
      report.rows.push_back(std::move(row));
    }
  }
  std::filesystem::create_directories(config.output_dir);
  detail::write_file(config.output_dir / "bench.tsv", encode_bench(report));
  return report;
}

std::string encode_bench(const BenchReport& r) {
  const char* metric = r.mode == PlanMode::kSequence ? "ler" : "der";
  std::string out = fmt::format("fixture\tbudget\tmean_{}\tmean_overhead\truns\n", metric);
  for (const BenchRow& row : r.rows) {
    std::string runs;
    for (double v : row.metrics) runs += (runs.empty() ? "" : ",") + detail::format_real(v);
    out += fmt::format("{}\t{}\t{}\t{}\t{}\n", row.fixture, detail::format_real(row.budget),
                       detail::format_real(row.mean_metric), detail::format_real(row.mean_overhead), runs);
  }
  return out;
}

}  // namespace traceobf
