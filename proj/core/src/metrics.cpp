// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/metrics.hpp"

#include <algorithm>
#include <cstdlib>

#include "traceobf/error.hpp"

namespace traceobf {

std::size_t levenshtein(const std::vector<OpKind>& a, const std::vector<OpKind>& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double ler(const LabelSequence& pred, const LabelSequence& truth) {
  if (truth.labels.empty()) throw Error(ErrorCode::kEmptyTruth, "LER needs a non-empty truth sequence");
  return static_cast<double>(levenshtein(pred.labels, truth.labels)) /
         static_cast<double>(truth.labels.size());
}

double der(const Dims& pred, const Dims& truth) {
  if (truth.c < 1 || truth.j < 1) throw Error(ErrorCode::kZeroTruth, "DER needs c* and j* of at least 1");
  return std::abs(static_cast<double>(pred.c - truth.c)) / truth.c +
         std::abs(static_cast<double>(pred.j - truth.j)) / truth.j;
}

}  // namespace traceobf
