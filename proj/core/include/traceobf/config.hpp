// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration shared by every command: a JSON file layered over
// defaults, with command-line flags applied last.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "traceobf/attacker.hpp"
#include "traceobf/obfuscator.hpp"

namespace traceobf {

struct RunConfig {
  std::string device = "sim-turing";  // built-in name or path to a JSON profile
  std::vector<LeakageCase> cases{LeakageCase::kA, LeakageCase::kB, LeakageCase::kC};
  LeakageCase eval_case = LeakageCase::kC;
  std::string arch_family = "cifar";  // cifar | imagenet
  std::size_t train_archs = 500;
  // The seed fields inside seq, dim and ga are overwritten from `seed`.
  SeqTrainParams seq;
  DimTrainParams dim;
  GaParams ga;
  double budget = 0.05;
  PlanMode mode = PlanMode::kSequence;
  std::uint64_t seed = 0;
  std::vector<int> target_layers;  // empty means the fixture targets, else every Conv2D
  std::vector<std::string> bench_fixtures{"vgg11", "vgg13", "resnet20", "resnet32"};
  std::vector<double> bench_budgets{0.0, 0.01, 0.02, 0.05, 0.10};
  int bench_repeats = 3;
  std::filesystem::path models_dir = "models";
  std::filesystem::path output_dir = "out";
  std::filesystem::path dataset_dir;  // datasets are kept only when set
};

// Overlays the keys present in `json_text`; unknown keys are rejected.
// Throws Error(kConfig) on malformed values.
void apply_config_json(RunConfig& config, std::string_view json_text, std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& config);

// Throws Error(kConfig) when any field is out of range, including B < 0.
void check_config(const RunConfig& config);

DeviceProfile resolve_device(const RunConfig& config);

}  // namespace traceobf
