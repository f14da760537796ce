// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/forest.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "text_util.hpp"
#include "traceobf/error.hpp"
#include "traceobf/parallel.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {

void Dataset2D::push_row(const std::vector<double>& r) {
  if (cols == 0) cols = r.size();
  if (r.size() != cols) throw Error(ErrorCode::kPrecondition, "row width differs from dataset width");
  values.insert(values.end(), r.begin(), r.end());
}

double DecisionTree::predict(const double* x) const {
  int i = 0;
  while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return best;
}

namespace {

// Each node keeps its samples sorted once per feature; splitting partitions
// those lists stably, so a level costs O(samples * features).
class TreeGrower {
 public:
  TreeGrower(const Dataset2D& x, const std::vector<double>& y, const ForestParams& p)
      : x_(x), y_(y), p_(p), goes_left_(x.rows(), 0) {}

  DecisionTree grow(const std::vector<std::size_t>& sample) {
    DecisionTree tree;
    tree.nodes.reserve(2 * sample.size());
    Lists lists(x_.cols, sample);
    for (std::size_t f = 0; f < x_.cols; ++f) {
      std::stable_sort(lists[f].begin(), lists[f].end(),
                       [&](std::size_t a, std::size_t b) { return x_.row(a)[f] < x_.row(b)[f]; });
    }
    build(tree, lists, 0);
    return tree;
  }

 private:
  using Lists = std::vector<std::vector<std::size_t>>;

  double value(std::size_t i, std::size_t f) const { return x_.values[i * x_.cols + f]; }

  double leaf_value(const std::vector<std::size_t>& idx) const {
    if (p_.task == TreeTask::kRegression) {
      double s = 0.0;
      for (auto i : idx) s += y_[i];
      return s / static_cast<double>(idx.size());
    }
    std::vector<int> counts(p_.num_classes, 0);
    for (auto i : idx) ++counts[static_cast<int>(y_[i])];
    return static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  bool pure(const std::vector<std::size_t>& idx) const {
    for (auto i : idx) {
      if (y_[i] != y_[idx[0]]) return false;
    }
    return true;
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  // impurity decrease
  };

  void consider(Split& best, std::size_t f, double gain, double lo, double hi) const {
    if (gain > best.score + 1e-12) best = {static_cast<int>(f), 0.5 * (lo + hi), gain};
  }

  Split best_split(const Lists& lists) const {
    const std::size_t n = lists[0].size();
    Split best;
    if (p_.task == TreeTask::kRegression) {
      double total = 0.0, total_sq = 0.0;
      for (auto i : lists[0]) {
        total += y_[i];
        total_sq += y_[i] * y_[i];
      }
      const double parent = total_sq - total * total / n;
      for (std::size_t f = 0; f < x_.cols; ++f) {
        const auto& col = lists[f];
        double left = 0.0, left_sq = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
          const double t = y_[col[k]];
          left += t;
          left_sq += t * t;
          const double v = value(col[k], f);
          const double next = value(col[k + 1], f);
          if (v == next) continue;
          const double nl = static_cast<double>(k + 1);
          const double nr = static_cast<double>(n - k - 1);
          const double right = total - left;
          const double right_sq = total_sq - left_sq;
          consider(best, f, parent - (left_sq - left * left / nl) - (right_sq - right * right / nr), v, next);
        }
      }
      return best;
    }
    const int nc = p_.num_classes;
    std::vector<double> total(nc, 0.0), left(nc, 0.0);
    for (auto i : lists[0]) total[static_cast<int>(y_[i])] += 1.0;
    double total_sq = 0.0;
    for (int c = 0; c < nc; ++c) total_sq += total[c] * total[c];
    const double parent = n - total_sq / n;
    for (std::size_t f = 0; f < x_.cols; ++f) {
      const auto& col = lists[f];
      std::fill(left.begin(), left.end(), 0.0);
      double left_sq = 0.0;
      double right_sq = total_sq;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const int c = static_cast<int>(y_[col[k]]);
        const double lc = left[c];
        const double rc = total[c] - lc;
        left_sq += 2.0 * lc + 1.0;
        right_sq -= 2.0 * rc - 1.0;
        left[c] = lc + 1.0;
        const double v = value(col[k], f);
        const double next = value(col[k + 1], f);
        if (v == next) continue;
        const double nl = static_cast<double>(k + 1);
        const double nr = static_cast<double>(n - k - 1);
        consider(best, f, parent - (nl - left_sq / nl) - (nr - right_sq / nr), v, next);
      }
    }
    return best;
  }

  int build(DecisionTree& tree, const Lists& lists, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto& idx = lists[0];
    if (depth >= p_.max_depth || static_cast<int>(idx.size()) < p_.min_samples_split || pure(idx)) {
      tree.nodes[id].value = leaf_value(idx);
      return id;
    }
    const Split s = best_split(lists);
    if (s.feature < 0) {
      tree.nodes[id].value = leaf_value(idx);
      return id;
    }
    for (auto i : idx) goes_left_[i] = value(i, s.feature) <= s.threshold ? 1 : 0;
    Lists lo(x_.cols), hi(x_.cols);
    for (std::size_t f = 0; f < x_.cols; ++f) {
      for (auto i : lists[f]) (goes_left_[i] ? lo[f] : hi[f]).push_back(i);
    }
    tree.nodes[id].feature = s.feature;
    tree.nodes[id].threshold = s.threshold;
    const int l = build(tree, lo, depth + 1);
    const int r = build(tree, hi, depth + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }

  const Dataset2D& x_;
  const std::vector<double>& y_;
  const ForestParams& p_;
  std::vector<char> goes_left_;
};

}  // namespace

RandomForest RandomForest::fit(const Dataset2D& x, const std::vector<double>& y, const ForestParams& params) {
  const std::size_t n = x.rows();
  if (n == 0) throw Error(ErrorCode::kEmptyDataset, "cannot fit a forest on zero samples");
  if (y.size() != n) throw Error(ErrorCode::kPrecondition, "target count differs from sample count");
  if (params.trees < 1) throw Error(ErrorCode::kPrecondition, "forest needs at least one tree");
  if (params.task == TreeTask::kClassification) {
    for (double v : y) {
      if (v < 0 || v >= params.num_classes || v != static_cast<int>(v)) {
        throw Error(ErrorCode::kPrecondition, "class targets must be integers in [0, num_classes)");
      }
    }
  }
  RandomForest forest;
  forest.task_ = params.task;
  forest.num_classes_ = params.task == TreeTask::kClassification ? params.num_classes : 0;
  forest.trees_.resize(params.trees);
  parallel_for(static_cast<std::size_t>(params.trees), [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = rng.index(n);
    std::sort(sample.begin(), sample.end());
    forest.trees_[t] = TreeGrower(x, y, params).grow(sample);
  });
  return forest;
}

double RandomForest::predict(const double* x) const {
  if (task_ == TreeTask::kRegression) {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(x);
    return s / static_cast<double>(trees_.size());
  }
  std::vector<int> votes(num_classes_, 0);
  for (const auto& t : trees_) ++votes[static_cast<int>(t.predict(x))];
  return static_cast<double>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::string RandomForest::encode() const {
  std::string out = fmt::format("forest {} classes={} trees={}\n",
                                task_ == TreeTask::kRegression ? "regression" : "classification",
                                num_classes_, trees_.size());
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    out += fmt::format("tree {} nodes={}\n", t, trees_[t].nodes.size());
    for (const TreeNode& n : trees_[t].nodes) {
      if (n.feature >= 0) {
        out += fmt::format("n {} {} {} {}\n", n.feature, detail::format_real(n.threshold), n.left, n.right);
      } else {
        out += fmt::format("l {}\n", detail::format_real(n.value));
      }
    }
  }
  return out;
}

RandomForest RandomForest::decode(const std::vector<std::string_view>& lines, std::size_t& pos,
                                  std::string_view source) {
  auto fail = [&](const std::string& msg) -> void { throw ParseError(source, static_cast<int>(pos) + 1, msg); };
  auto field = [&](std::string_view tok, std::string_view key) -> long long {
    if (tok.substr(0, key.size()) != key || tok.size() <= key.size() || tok[key.size()] != '=') {
      fail(fmt::format("expected {}=<n>", key));
    }
    auto v = detail::parse_number<long long>(tok.substr(key.size() + 1));
    if (!v) fail(fmt::format("bad value for {}", key));
    return *v;
  };
  if (pos >= lines.size()) fail("missing forest record");
  auto head = detail::tokens(lines[pos]);
  if (head.size() != 4 || head[0] != "forest") fail("expected 'forest <task> classes=<n> trees=<n>'");
  RandomForest f;
  if (head[1] == "regression") {
    f.task_ = TreeTask::kRegression;
  } else if (head[1] == "classification") {
    f.task_ = TreeTask::kClassification;
  } else {
    fail(fmt::format("unknown forest task '{}'", head[1]));
  }
  f.num_classes_ = static_cast<int>(field(head[2], "classes"));
  const long long count = field(head[3], "trees");
  ++pos;
  for (long long t = 0; t < count; ++t) {
    if (pos >= lines.size()) fail("truncated forest");
    auto th = detail::tokens(lines[pos]);
    if (th.size() != 3 || th[0] != "tree") fail("expected 'tree <i> nodes=<n>'");
    const long long nodes = field(th[2], "nodes");
    ++pos;
    DecisionTree tree;
    for (long long k = 0; k < nodes; ++k) {
      if (pos >= lines.size()) fail("truncated tree");
      auto tok = detail::tokens(lines[pos]);
      TreeNode n;
      if (tok.size() == 5 && tok[0] == "n") {
        auto feat = detail::parse_number<int>(tok[1]);
        auto thr = detail::parse_number<double>(tok[2]);
        auto l = detail::parse_number<int>(tok[3]);
        auto r = detail::parse_number<int>(tok[4]);
        if (!feat || !thr || !l || !r) fail("malformed split node");
        if (*l <= k || *r <= k || *l >= nodes || *r >= nodes) fail("child index out of range");
        n.feature = *feat;
        n.threshold = *thr;
        n.left = *l;
        n.right = *r;
      } else if (tok.size() == 2 && tok[0] == "l") {
        auto v = detail::parse_number<double>(tok[1]);
        if (!v) fail("malformed leaf");
        n.value = *v;
      } else {
        fail("expected a split or leaf node");
      }
      tree.nodes.push_back(n);
      ++pos;
    }
    if (tree.nodes.empty()) fail("tree has no nodes");
    f.trees_.push_back(std::move(tree));
  }
  return f;
}

}  // namespace traceobf
