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

#include <fstream>
#include <sstream>

#include "peftner/binary_io.hpp"
#include "peftner/error.hpp"

namespace peftner {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::OverlappingSpans: return "OverlappingSpans";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::CorpusEmpty: return "CorpusEmpty";
    case ErrorCode::VocabTooSmall: return "VocabTooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::DoubleBackward: return "DoubleBackward";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::AllIgnored: return "AllIgnored";
    case ErrorCode::EmptyDevSet: return "EmptyDevSet";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::MissingPath: return "MissingPath";
    case ErrorCode::RoleViolation: return "RoleViolation";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ObjectiveFailure: return "ObjectiveFailure";
  }
  return "Unknown";
}

namespace io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

}  // namespace io
}  // namespace peftner
