// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "traceobf/config.hpp"
#include "traceobf/error.hpp"

namespace traceobf {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kPrecondition;
}

TEST(ConfigTest, DefaultsAreValid) {
  const RunConfig c;
  EXPECT_NO_THROW(check_config(c));
  EXPECT_EQ(c.cases.size(), 3u);
  EXPECT_EQ(c.bench_repeats, 3);
  EXPECT_EQ(c.bench_budgets, (std::vector<double>{0.0, 0.01, 0.02, 0.05, 0.10}));
}

TEST(ConfigTest, JsonOverlaysOnlyPresentKeys) {
  RunConfig c;
  apply_config_json(c, R"({"budget": 0.1, "ga": {"population": 32}, "cases": ["C"],
                           "paths": {"models": "m"}, "mode": "dimension"})");
  EXPECT_EQ(c.budget, 0.1);
  EXPECT_EQ(c.ga.population, 32);
  EXPECT_EQ(c.ga.generations, GaParams{}.generations);
  EXPECT_EQ(c.cases, std::vector<LeakageCase>{LeakageCase::kC});
  EXPECT_EQ(c.models_dir, std::filesystem::path("m"));
  EXPECT_EQ(c.mode, PlanMode::kDimension);
  EXPECT_EQ(c.device, "sim-turing");
}

TEST(ConfigTest, SerializedConfigReadsBackUnchanged) {
  RunConfig c;
  c.budget = 0.02;
  c.seed = 77;
  c.ga.epsilon = 0.05;
  c.bench_fixtures = {"vgg11"};
  c.dataset_dir = "ds";
  const std::string text = config_to_json(c);
  RunConfig back;
  apply_config_json(back, text);
  EXPECT_EQ(config_to_json(back), text);
}

TEST(ConfigTest, MalformedInputIsAConfigError) {
  RunConfig c;
  EXPECT_EQ(code_of([&] { apply_config_json(c, R"({"bugdet": 1})"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([&] { apply_config_json(c, R"({"ga": {"pop": 1}})"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([&] { apply_config_json(c, R"({"budget": "high"})"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([&] { apply_config_json(c, R"({"cases": ["D"]})"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([&] { apply_config_json(c, "[1, 2]"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([&] { apply_config_json(c, "{"); }), ErrorCode::kConfig);
}

TEST(ConfigTest, RangeChecksRejectBadValues) {
  auto rejects = [](auto&& edit) {
    RunConfig c;
    edit(c);
    return code_of([&] { check_config(c); }) == ErrorCode::kConfig;
  };
  EXPECT_TRUE(rejects([](RunConfig& c) { c.budget = -0.01; }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.cases.clear(); }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.train_archs = 2; }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.arch_family = "mnist"; }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.ga.population = 5; }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.seq.tree_counts = {}; }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.dim.bandwidth = 0.0; }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.bench_fixtures = {"lenet"}; }));
  EXPECT_TRUE(rejects([](RunConfig& c) { c.bench_budgets = {-1.0}; }));
}

TEST(ConfigTest, DevicesResolveByNameOrFile) {
  RunConfig c;
  c.device = "sim-ampere";
  EXPECT_EQ(resolve_device(c).name, "sim-ampere");
  const auto path = std::filesystem::temp_directory_path() / "traceobf_device.json";
  std::ofstream(path) << R"({"name": "lab", "macs_per_cycle": 99})";
  c.device = path.string();
  const DeviceProfile d = resolve_device(c);
  EXPECT_EQ(d.name, "lab");
  EXPECT_EQ(d.macs_per_cycle, 99.0);
  c.device = "no-such-device";
  EXPECT_EQ(code_of([&] { resolve_device(c); }), ErrorCode::kConfig);
}

TEST(ConfigTest, LoadConfigReportsTheFile) {
  const auto path = std::filesystem::temp_directory_path() / "traceobf_bad.json";
  std::ofstream(path) << R"({"seed": 1, "unknown": 2})";
  try {
    load_config(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("traceobf_bad.json"), std::string::npos);
  }
}

}  // namespace
}  // namespace traceobf
