// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace traceobf {

enum class ErrorCode {
  kShapeMismatch,
  kCycleDetected,
  kInvalidGraph,
  kNotWidenable,
  kNotDivisible,
  kNoActivation,
  kPrecondition,
  kInvalidStrategy,
  kInvalidPlan,
  kEmptyDataset,
  kEmptyTruth,
  kZeroTruth,
  kParse,
  kIo,
  kMissingModels,
  kConfig,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry the 1-based line number of the offending record.
class ParseError : public Error {
 public:
  ParseError(std::string_view source, int line, const std::string& message)
      : Error(ErrorCode::kParse,
              std::string(source) + ":" + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace traceobf
