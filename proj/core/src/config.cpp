// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/config.hpp"

#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "text_util.hpp"
#include "traceobf/error.hpp"
#include "traceobf/fixtures.hpp"

namespace traceobf {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known, std::string_view where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw Error(ErrorCode::kConfig, fmt::format("{}: unknown key '{}'", where, key));
  }
}

LeakageCase case_from(const json& v) {
  const auto c = parse_case(v.get<std::string>());
  if (!c) throw Error(ErrorCode::kConfig, fmt::format("unknown leakage case {}", v.dump()));
  return *c;
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_seq(const json& j, SeqTrainParams& p) {
  reject_unknown(j, {"tree_counts", "bandwidth", "max_depth"}, "seq");
  read(j, "tree_counts", p.tree_counts);
  read(j, "bandwidth", p.bandwidth);
  read(j, "max_depth", p.max_depth);
}

void read_dim(const json& j, DimTrainParams& p) {
  reject_unknown(j, {"tree_counts", "bandwidth", "max_depth"}, "dim");
  read(j, "tree_counts", p.tree_counts);
  read(j, "bandwidth", p.bandwidth);
  read(j, "max_depth", p.max_depth);
}

void read_ga(const json& j, GaParams& p) {
  reject_unknown(j,
                 {"population", "generations", "sigma0", "sigma_halving_period", "elite_fraction", "epsilon",
                  "init_density", "mutated_genes"},
                 "ga");
  read(j, "population", p.population);
  read(j, "generations", p.generations);
  read(j, "sigma0", p.sigma0);
  read(j, "sigma_halving_period", p.sigma_halving_period);
  read(j, "elite_fraction", p.elite_fraction);
  read(j, "epsilon", p.epsilon);
  read(j, "init_density", p.init_density);
  read(j, "mutated_genes", p.mutated_genes);
}

}  // namespace

void apply_config_json(RunConfig& c, std::string_view json_text, std::string_view source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfig, fmt::format("{}: {}", source, e.what()));
  }
  if (!j.is_object()) throw Error(ErrorCode::kConfig, fmt::format("{}: expected a JSON object", source));
  try {
    reject_unknown(j,
                   {"device", "cases", "eval_case", "arch_family", "train_archs", "seq", "dim", "ga", "budget",
                    "mode", "seed", "target_layers", "bench", "paths"},
                   source);
    read(j, "device", c.device);
    if (j.contains("cases")) {
      c.cases.clear();
      for (const json& v : j.at("cases")) c.cases.push_back(case_from(v));
    }
    if (j.contains("eval_case")) c.eval_case = case_from(j.at("eval_case"));
    read(j, "arch_family", c.arch_family);
    read(j, "train_archs", c.train_archs);
    if (j.contains("seq")) read_seq(j.at("seq"), c.seq);
    if (j.contains("dim")) read_dim(j.at("dim"), c.dim);
    if (j.contains("ga")) read_ga(j.at("ga"), c.ga);
    read(j, "budget", c.budget);
    if (j.contains("mode")) {
      const auto m = parse_plan_mode(j.at("mode").get<std::string>());
      if (!m) throw Error(ErrorCode::kConfig, fmt::format("unknown mode {}", j.at("mode").dump()));
      c.mode = *m;
    }
    read(j, "seed", c.seed);
    read(j, "target_layers", c.target_layers);
    if (j.contains("bench")) {
      const json& b = j.at("bench");
      reject_unknown(b, {"fixtures", "budgets", "repeats"}, "bench");
      read(b, "fixtures", c.bench_fixtures);
      read(b, "budgets", c.bench_budgets);
      read(b, "repeats", c.bench_repeats);
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      reject_unknown(p, {"models", "output", "datasets"}, "paths");
      if (p.contains("models")) c.models_dir = p.at("models").get<std::string>();
      if (p.contains("output")) c.output_dir = p.at("output").get<std::string>();
      if (p.contains("datasets")) c.dataset_dir = p.at("datasets").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, fmt::format("{}: {}", source, e.what()));
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig c;
  apply_config_json(c, detail::read_file(path), path.string());
  return c;
}

std::string config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["device"] = c.device;
  j["cases"] = json::array();
  for (LeakageCase k : c.cases) j["cases"].push_back(std::string(case_name(k)));
  j["eval_case"] = std::string(case_name(c.eval_case));
  j["arch_family"] = c.arch_family;
  j["train_archs"] = c.train_archs;
  j["seq"] = {{"tree_counts", c.seq.tree_counts}, {"bandwidth", c.seq.bandwidth}, {"max_depth", c.seq.max_depth}};
  j["dim"] = {{"tree_counts", c.dim.tree_counts}, {"bandwidth", c.dim.bandwidth}, {"max_depth", c.dim.max_depth}};
  nlohmann::ordered_json ga;
  ga["population"] = c.ga.population;
  ga["generations"] = c.ga.generations;
  ga["sigma0"] = c.ga.sigma0;
  ga["sigma_halving_period"] = c.ga.sigma_halving_period;
  ga["elite_fraction"] = c.ga.elite_fraction;
  ga["epsilon"] = c.ga.epsilon;
  ga["init_density"] = c.ga.init_density;
  ga["mutated_genes"] = c.ga.mutated_genes;
  j["ga"] = ga;
  j["budget"] = c.budget;
  j["mode"] = std::string(plan_mode_name(c.mode));
  j["seed"] = c.seed;
  j["target_layers"] = c.target_layers;
  nlohmann::ordered_json bench;
  bench["fixtures"] = c.bench_fixtures;
  bench["budgets"] = c.bench_budgets;
  bench["repeats"] = c.bench_repeats;
  j["bench"] = bench;
  nlohmann::ordered_json paths;
  paths["models"] = c.models_dir.string();
  paths["output"] = c.output_dir.string();
  paths["datasets"] = c.dataset_dir.string();
  j["paths"] = paths;
  return j.dump(2) + "\n";
}

void check_config(const RunConfig& c) {
  if (!(c.budget >= 0.0)) throw Error(ErrorCode::kConfig, "budget must be non-negative");
  if (c.cases.empty()) throw Error(ErrorCode::kConfig, "at least one leakage case is required");
  if (c.train_archs < 5) throw Error(ErrorCode::kConfig, "train_archs must be at least 5");
  if (c.arch_family != "cifar" && c.arch_family != "imagenet") {
    throw Error(ErrorCode::kConfig, fmt::format("unknown arch family '{}'", c.arch_family));
  }
  check_ga_params(c.ga);
  if (c.seq.tree_counts.empty() || c.dim.tree_counts.empty()) {
    throw Error(ErrorCode::kConfig, "tree_counts must not be empty");
  }
  for (int t : c.seq.tree_counts) {
    if (t < 1) throw Error(ErrorCode::kConfig, "tree counts must be positive");
  }
  for (int t : c.dim.tree_counts) {
    if (t < 1) throw Error(ErrorCode::kConfig, "tree counts must be positive");
  }
  if (!(c.seq.bandwidth > 0.0) || !(c.dim.bandwidth > 0.0)) {
    throw Error(ErrorCode::kConfig, "bandwidth must be positive");
  }
  if (c.seq.max_depth < 1 || c.dim.max_depth < 1) throw Error(ErrorCode::kConfig, "max_depth must be positive");
  if (c.bench_repeats < 1) throw Error(ErrorCode::kConfig, "bench repeats must be positive");
  for (double b : c.bench_budgets) {
    if (!(b >= 0.0)) throw Error(ErrorCode::kConfig, "bench budgets must be non-negative");
  }
  const std::vector<std::string> known = fixture_names();
  for (const std::string& f : c.bench_fixtures) {
    if (std::find(known.begin(), known.end(), f) == known.end()) {
      throw Error(ErrorCode::kConfig, fmt::format("unknown fixture '{}'", f));
    }
  }
}

DeviceProfile resolve_device(const RunConfig& c) {
  const std::vector<std::string> names = builtin_device_names();
  if (std::find(names.begin(), names.end(), c.device) != names.end()) return builtin_device(c.device);
  if (std::filesystem::exists(c.device)) return device_from_json(detail::read_file(c.device));
  throw Error(ErrorCode::kConfig, fmt::format("device '{}' is neither built in nor a readable file", c.device));
}

}  // namespace traceobf
