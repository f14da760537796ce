// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Architecture-stealing attacker: labelled trace corpora, a per-step layer
// classifier with a collapse decoder, and channel-count regressors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traceobf/arch_gen.hpp"
#include "traceobf/backend.hpp"
#include "traceobf/cost_model.hpp"
#include "traceobf/forest.hpp"
#include "traceobf/metrics.hpp"

namespace traceobf {

// Ground truth attached to one trace step.
struct StepTruth {
  std::optional<Dims> dims;  // Conv2D-anchored steps only
  int upstream = -1;         // step producing this step's input channels
  friend bool operator==(const StepTruth&, const StepTruth&) = default;
};

struct TraceRecord {
  std::string name;
  Trace trace;  // labelled and masked to the dataset's case
  LabelSequence truth;
  std::vector<StepTruth> steps;
};

struct TraceDataset {
  LeakageCase leak = LeakageCase::kC;
  std::vector<TraceRecord> records;
};

// For every kernel of `model`, the index of the Conv2D kernel whose output
// channels reach it through channel-preserving operators, or -1.
std::vector<int> upstream_kernels(const CompiledModel& model);

TraceRecord make_record(const CompiledModel& model, LeakageCase leak, const DeviceProfile& device,
                        std::string name);

// Architecture i is generated from derive_seed(seed, i); config.seed is
// ignored. Throws Error(kPrecondition) when n is 0.
TraceDataset build_dataset(std::size_t n, const ArchGenConfig& config, LeakageCase leak,
                           std::uint64_t seed, const DeviceProfile& device);

// Re-masks to a case with no more features than `dataset.leak`.
TraceDataset restrict_case(const TraceDataset& dataset, LeakageCase leak);

struct DatasetSplit {
  std::vector<TraceRecord> train;
  std::vector<TraceRecord> validation;
};

// 4:1 split; the last floor(n / 5) records are held out.
DatasetSplit split_dataset(const TraceDataset& dataset);

// One trace file per record plus manifest.tsv.
void save_dataset(const TraceDataset& dataset, const std::filesystem::path& dir);
TraceDataset load_dataset(const std::filesystem::path& dir);

// Context-window features of one step: the visible counters of the step and
// its neighbours, log ratios between them, and position in the trace.
// `bandwidth` is the attacker's estimate of DRAM bytes per cycle on the
// profiled device, used to separate memory time from compute time.
std::size_t step_feature_count(LeakageCase leak);
std::vector<double> step_features(const Trace& trace, std::size_t step, LeakageCase leak,
                                  double bandwidth);

// Per-column min-max scaling fitted on training rows.
struct FeatureNorm {
  std::vector<double> lo;
  std::vector<double> hi;

  static FeatureNorm fit(const Dataset2D& rows);
  void apply(std::vector<double>& row) const;
  void apply(Dataset2D& rows) const;
};

inline constexpr int kStepClasses = 5;  // none, Conv2D, Linear, MaxPool, SoftMax

int step_class(const std::optional<OpKind>& label);
std::optional<OpKind> class_label(int cls);

struct SeqTrainParams {
  std::vector<int> tree_counts{30, 50, 100};
  double bandwidth = 512.0;
  int max_depth = 12;
  std::uint64_t seed = 0;
};

struct DimTrainParams {
  std::vector<int> tree_counts{30, 50, 100, 200};
  double bandwidth = 512.0;
  int max_depth = 12;
  std::uint64_t seed = 0;
};

// Bagged ensemble of step classifiers; each member is scored separately.
class SeqPredictor {
 public:
  // Throws Error(kEmptyDataset) when no record has a step.
  static SeqPredictor train(const std::vector<TraceRecord>& records, LeakageCase leak,
                            const SeqTrainParams& params);

  LeakageCase leak() const { return leak_; }
  std::size_t members() const { return members_.size(); }
  const std::vector<int>& tree_counts() const { return tree_counts_; }

  std::vector<std::optional<OpKind>> classify(const Trace& trace, std::size_t member) const;
  // Classified steps with the non-complex ones dropped.
  LabelSequence predict(const Trace& trace, std::size_t member) const;

  std::string encode() const;
  static SeqPredictor decode(std::string_view text, std::string_view source = "<model>");

 private:
  LeakageCase leak_ = LeakageCase::kC;
  std::vector<int> tree_counts_;
  double bandwidth_ = 512.0;
  FeatureNorm norm_;
  std::vector<RandomForest> members_;
};

// Bagged pairs of regressors for input and output channels, trained on
// Conv2D-anchored steps with log2 targets.
class DimRegressor {
 public:
  static DimRegressor train(const std::vector<TraceRecord>& records, LeakageCase leak,
                            const DimTrainParams& params);

  LeakageCase leak() const { return leak_; }
  std::size_t members() const { return c_.size(); }
  const std::vector<int>& tree_counts() const { return tree_counts_; }

  // Rounded to the nearest positive integer.
  Dims predict_step(const Trace& trace, std::size_t step, std::size_t member) const;

  std::string encode() const;
  static DimRegressor decode(std::string_view text, std::string_view source = "<model>");

 private:
  LeakageCase leak_ = LeakageCase::kC;
  std::vector<int> tree_counts_;
  double bandwidth_ = 512.0;
  FeatureNorm norm_;
  std::vector<RandomForest> c_;
  std::vector<RandomForest> j_;
};

// Dimensions of `step`; when `upstream` names a producer step whose output
// prediction disagrees with this step's input prediction, the input channel
// count becomes their rounded average.
Dims predict_dims(const DimRegressor& model, const Trace& trace, std::size_t step, int upstream,
                  std::size_t member);

// Mean LER over records and members; records with an empty truth are skipped.
double validation_ler(const SeqPredictor& model, const std::vector<TraceRecord>& records);
// Mean DER over Conv2D-anchored steps and members.
double validation_der(const DimRegressor& model, const std::vector<TraceRecord>& records);

}  // namespace traceobf
