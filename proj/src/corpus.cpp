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

#include "peftner/corpus.hpp"

#include <algorithm>
#include <set>

#include "peftner/error.hpp"

namespace peftner::corpus {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    f(++line_no, line);
    pos = nl + 1;
  }
}

}  // namespace

bool parse_label(std::string_view label, BioLabel& out) {
  if (label == "O") {
    out = {Tag::Outside, {}};
    return true;
  }
  if (label.size() < 3 || label[1] != '-') return false;
  if (label[0] == 'B') {
    out = {Tag::Begin, label.substr(2)};
  } else if (label[0] == 'I') {
    out = {Tag::Inside, label.substr(2)};
  } else {
    return false;
  }
  return true;
}

bool is_valid_label(std::string_view label) {
  BioLabel parsed;
  return parse_label(label, parsed);
}

// Header lines such as "# peftner stage=predict ..." cannot be token lines.
static bool is_comment(std::string_view line, std::size_t n_fields) {
  return !line.empty() && line.front() == '#' && n_fields > 2;
}

std::vector<LabeledSequence> parse_conll(std::string_view text) {
  std::vector<LabeledSequence> out;
  LabeledSequence current;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) {
      if (!current.words.empty()) out.push_back(std::move(current));
      current = {};
      return;
    }
    const auto fields = split_fields(line);
    if (is_comment(line, fields.size())) return;
    if (fields.size() != 2) {
      throw LineError(ErrorCode::MalformedLine, line_no, "expected token and label");
    }
    if (!is_valid_label(fields[1])) {
      throw LineError(ErrorCode::InvalidLabel, line_no,
                      "invalid BIO label '" + std::string(fields[1]) + "'");
    }
    current.words.emplace_back(fields[0]);
    current.labels.emplace_back(fields[1]);
  });
  if (!current.words.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<std::vector<std::string>> parse_token_lines(std::string_view text) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> current;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) {
      if (!current.empty()) out.push_back(std::move(current));
      current = {};
      return;
    }
    const auto fields = split_fields(line);
    if (is_comment(line, fields.size())) return;
    if (fields.size() > 2) throw LineError(ErrorCode::MalformedLine, line_no, "too many fields");
    current.emplace_back(fields[0]);
  });
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string format_conll(const std::vector<LabeledSequence>& sequences) {
  std::string out;
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i < seq.words.size(); ++i) {
      out += seq.words[i];
      out += '\t';
      out += seq.labels[i];
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

std::vector<EntitySpan> decode_bio(const std::vector<std::string>& labels) {
  std::vector<EntitySpan> spans;
  bool open = false;
  std::string_view open_type;
  std::size_t open_start = 0;

  auto close = [&](std::size_t end) {
    if (open) spans.push_back({std::string(open_type), open_start, end});
    open = false;
  };

  for (std::size_t i = 0; i < labels.size(); ++i) {
    BioLabel label;
    if (!parse_label(labels[i], label)) {
      // Precondition violated; treat as outside rather than failing.
      close(i);
      continue;
    }
    switch (label.tag) {
      case Tag::Outside:
        close(i);
        break;
      case Tag::Begin:
        close(i);
        open = true;
        open_type = label.type;
        open_start = i;
        break;
      case Tag::Inside:
        if (!open || open_type != label.type) {
          close(i);
          open = true;
          open_type = label.type;
          open_start = i;
        }
        break;
    }
  }
  close(labels.size());
  return spans;
}

std::vector<std::string> encode_bio(std::vector<EntitySpan> spans, std::size_t length) {
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  std::vector<std::string> labels(length, "O");
  std::size_t covered_until = 0;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto& span = spans[k];
    if (span.start >= span.end || span.end > length) {
      throw Error(ErrorCode::OutOfBounds, "span [" + std::to_string(span.start) + "," +
                                              std::to_string(span.end) + ") outside length " +
                                              std::to_string(length));
    }
    if (k > 0 && span.start < covered_until) {
      throw Error(ErrorCode::OverlappingSpans,
                  "span starting at " + std::to_string(span.start) + " overlaps its predecessor");
    }
    labels[span.start] = "B-" + span.entity_type;
    for (std::size_t i = span.start + 1; i < span.end; ++i) labels[i] = "I-" + span.entity_type;
    covered_until = span.end;
  }
  return labels;
}

std::vector<Violation> validate_bio(const std::vector<std::string>& labels) {
  std::vector<Violation> out;
  std::string_view prev_type;
  bool prev_in_entity = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    BioLabel label;
    if (!parse_label(labels[i], label)) {
      out.push_back({i, "invalid label '" + labels[i] + "'"});
      prev_in_entity = false;
      continue;
    }
    if (label.tag == Tag::Inside && (!prev_in_entity || prev_type != label.type)) {
      out.push_back({i, prev_in_entity ? "I-" + std::string(label.type) + " continues a " +
                                             std::string(prev_type) + " entity"
                                       : "orphan I-" + std::string(label.type)});
    }
    prev_in_entity = label.tag != Tag::Outside;
    prev_type = label.type;
  }
  return out;
}

std::vector<std::string> entity_types(const std::vector<LabeledSequence>& sequences) {
  std::set<std::string> types;
  for (const auto& seq : sequences) {
    for (const auto& l : seq.labels) {
      BioLabel label;
      if (parse_label(l, label) && label.tag != Tag::Outside) types.emplace(label.type);
    }
  }
  return {types.begin(), types.end()};
}

std::vector<std::string> label_inventory(const std::vector<std::string>& types) {
  std::vector<std::string> out{"O"};
  for (const auto& t : types) {
    out.push_back("B-" + t);
    out.push_back("I-" + t);
  }
  return out;
}

}  // namespace peftner::corpus
