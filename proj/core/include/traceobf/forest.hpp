// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bagged CART ensembles: Gini-split classification and variance-split
// regression trees, each grown on a bootstrap sample.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace traceobf {

enum class TreeTask : std::uint8_t { kClassification, kRegression };

// Row-major samples.
struct Dataset2D {
  std::size_t cols = 0;
  std::vector<double> values;

  std::size_t rows() const { return cols == 0 ? 0 : values.size() / cols; }
  const double* row(std::size_t i) const { return values.data() + i * cols; }
  void push_row(const std::vector<double>& r);
};

struct ForestParams {
  TreeTask task = TreeTask::kRegression;
  int trees = 100;
  int max_depth = 12;
  int min_samples_split = 2;
  int num_classes = 0;  // classification only
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf: mean target or class index
};

class DecisionTree {
 public:
  std::vector<TreeNode> nodes;

  double predict(const double* x) const;
  int depth() const;
};

class RandomForest {
 public:
  RandomForest() = default;

  // Throws Error(kEmptyDataset) when there are no rows.
  static RandomForest fit(const Dataset2D& x, const std::vector<double>& y, const ForestParams& params);

  // Classification: majority vote, ties to the lower class. Regression: mean.
  double predict(const double* x) const;

  TreeTask task() const { return task_; }
  int num_classes() const { return num_classes_; }
  std::size_t tree_count() const { return trees_.size(); }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  std::string encode() const;
  // Parses the text from `lines[pos]` onward and advances `pos`.
  static RandomForest decode(const std::vector<std::string_view>& lines, std::size_t& pos,
                             std::string_view source);

 private:
  TreeTask task_ = TreeTask::kRegression;
  int num_classes_ = 0;
  std::vector<DecisionTree> trees_;
};

}  // namespace traceobf
