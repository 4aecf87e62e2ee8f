// Copyright 2026 The peftner Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace peftner {

enum class ErrorCode {
  MalformedLine,
  InvalidLabel,
  OverlappingSpans,
  OutOfBounds,
  CorpusEmpty,
  VocabTooSmall,
  LengthMismatch,
  InvalidWindow,
  CoverageGap,
  ShapeMismatch,
  NonScalarLoss,
  DoubleBackward,
  SequenceTooLong,
  InvalidConfig,
  UnknownTarget,
  FingerprintMismatch,
  BadCheckpoint,
  AllIgnored,
  EmptyDevSet,
  EmptyCorpus,
  NegativeInput,
  UnknownKey,
  MissingKey,
  MissingPath,
  RoleViolation,
  IoError,
  ObjectiveFailure,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code. The CLI reports `code` verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Errors tied to a 1-based input line (CoNLL and config readers).
class LineError : public Error {
 public:
  LineError(ErrorCode code, std::size_t line_no, const std::string& message)
      : Error(code, message + " (line " + std::to_string(line_no) + ")"), line_no_(line_no) {}

  std::size_t line_no() const { return line_no_; }

 private:
  std::size_t line_no_;
};

}  // namespace peftner
