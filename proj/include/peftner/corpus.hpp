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
#include <string>
#include <string_view>
#include <vector>

namespace peftner::corpus {

/// A sentence: word tokens with one BIO label per word.
struct LabeledSequence {
  std::vector<std::string> words;
  std::vector<std::string> labels;

  bool operator==(const LabeledSequence&) const = default;
};

/// Half-open word span [start, end) of one entity.
struct EntitySpan {
  std::string entity_type;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const EntitySpan&) const = default;
  auto operator<=>(const EntitySpan&) const = default;
};

enum class Tag { Outside, Begin, Inside };

/// A parsed BIO label. `type` is empty for Outside.
struct BioLabel {
  Tag tag = Tag::Outside;
  std::string_view type;
};

/// Returns false when `label` is not "O", "B-<T>" or "I-<T>" with nonempty T.
bool parse_label(std::string_view label, BioLabel& out);
bool is_valid_label(std::string_view label);

/// Reads CoNLL text: one "token<TAB|space>label" pair per line, blank lines
/// between sentences. A line starting with '#' that has more than two fields
/// is a comment. Throws LineError(MalformedLine | InvalidLabel).
std::vector<LabeledSequence> parse_conll(std::string_view text);

/// Tokens only, one per line (the `predict` input). A second field, if
/// present, is ignored.
std::vector<std::vector<std::string>> parse_token_lines(std::string_view text);

/// Writes TAB-separated CoNLL with a blank line after every sentence.
std::string format_conll(const std::vector<LabeledSequence>& sequences);

/// Maximal BIO runs to spans. An I-<T> with no open <T> entity opens one, as
/// if it were B-<T>. Labels must be syntactically valid.
std::vector<EntitySpan> decode_bio(const std::vector<std::string>& labels);

/// Inverse of decode_bio. Throws OverlappingSpans / OutOfBounds.
std::vector<std::string> encode_bio(std::vector<EntitySpan> spans, std::size_t length);

struct Violation {
  std::size_t position = 0;
  std::string reason;

  bool operator==(const Violation&) const = default;
};

/// Positions of syntax errors and orphan I- labels; empty means clean.
std::vector<Violation> validate_bio(const std::vector<std::string>& labels);

/// Sorted distinct entity types found in the labels of `sequences`.
std::vector<std::string> entity_types(const std::vector<LabeledSequence>& sequences);

/// Full label inventory "O", then B-/I- per type in sorted type order.
std::vector<std::string> label_inventory(const std::vector<std::string>& types);

}  // namespace peftner::corpus
