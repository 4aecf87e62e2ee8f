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

#include <gtest/gtest.h>

#include <functional>

#include "oracles.hpp"
#include "test_util.hpp"
#include "peftner/error.hpp"
#include "peftner/rng.hpp"

namespace peftner::corpus {
namespace {

using Labels = std::vector<std::string>;
using testing::code_of;

TEST(ParseConll, SingleSentence) {
  const auto seqs = parse_conll("Aspirin B-Chemical\nhelps O\n");
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].words, (Labels{"Aspirin", "helps"}));
  EXPECT_EQ(seqs[0].labels, (Labels{"B-Chemical", "O"}));
}

TEST(ParseConll, BlankLineSeparatesSentences) {
  const auto seqs = parse_conll("a O\n\nb O\n");
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].words, Labels{"a"});
  EXPECT_EQ(seqs[1].words, Labels{"b"});
}

TEST(ParseConll, EmptyInputAndTrailingBlanks) {
  EXPECT_TRUE(parse_conll("").empty());
  EXPECT_EQ(parse_conll("a\tO\n\n\n\n").size(), 1u);
  EXPECT_EQ(parse_conll("a O\r\nb O\r\n")[0].labels, (Labels{"O", "O"}));
}

TEST(ParseConll, MissingLabelIsMalformedAtLine1) {
  try {
    parse_conll("a\n");
    FAIL();
  } catch (const LineError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_EQ(e.line_no(), 1u);
  }
}

TEST(ParseConll, ThreeFieldsAreMalformed) {
  EXPECT_EQ(code_of([] { parse_conll("a O\nb O extra\n"); }), ErrorCode::MalformedLine);
}

TEST(ParseConll, BadLabelReportsLine) {
  try {
    parse_conll("a O\nb X-Gene\n");
    FAIL();
  } catch (const LineError& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidLabel);
    EXPECT_EQ(e.line_no(), 2u);
  }
  EXPECT_EQ(code_of([] { parse_conll("a B-\n"); }), ErrorCode::InvalidLabel);
  EXPECT_EQ(code_of([] { parse_conll("a o\n"); }), ErrorCode::InvalidLabel);
}

TEST(ParseConll, HeaderCommentSkipped) {
  const auto seqs = parse_conll("# peftner stage=predict seed=1\na O\n");
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].words, Labels{"a"});
  // A two-field line starting with '#' is an ordinary token.
  EXPECT_EQ(parse_conll("# O\n")[0].words, Labels{"#"});
}

TEST(ParseConll, FormatRoundTrip) {
  const std::vector<LabeledSequence> seqs{{{"Aspirin", "helps"}, {"B-Chemical", "O"}},
                                          {{"BRCA1", "mutation"}, {"B-Gene", "O"}}};
  const auto text = format_conll(seqs);
  EXPECT_EQ(text, "Aspirin\tB-Chemical\nhelps\tO\n\nBRCA1\tB-Gene\nmutation\tO\n\n");
  EXPECT_EQ(parse_conll(text), seqs);
}

TEST(TokenLines, SecondFieldIgnored) {
  const auto s = parse_token_lines("a\nb O\n\nc\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], (Labels{"a", "b"}));
  EXPECT_EQ(code_of([] { parse_token_lines("a b c\n"); }), ErrorCode::MalformedLine);
}

TEST(DecodeBio, Examples) {
  EXPECT_EQ(decode_bio({"B-Disease", "I-Disease", "O"}), (std::vector<EntitySpan>{{"Disease", 0, 2}}));
  EXPECT_TRUE(decode_bio({"O", "O", "O"}).empty());
  EXPECT_EQ(decode_bio({"I-Chem", "I-Chem", "B-Chem"}),
            (std::vector<EntitySpan>{{"Chem", 0, 2}, {"Chem", 2, 3}}));
  EXPECT_EQ(decode_bio({"B-X", "I-Y"}), (std::vector<EntitySpan>{{"X", 0, 1}, {"Y", 1, 2}}));
  EXPECT_TRUE(decode_bio({}).empty());
}

TEST(EncodeBio, Examples) {
  EXPECT_EQ(encode_bio({{"Disease", 0, 2}}, 3), (Labels{"B-Disease", "I-Disease", "O"}));
  EXPECT_EQ(encode_bio({}, 2), (Labels{"O", "O"}));
  EXPECT_EQ(encode_bio({{"X", 0, 1}, {"X", 1, 2}}, 2), (Labels{"B-X", "B-X"}));
  EXPECT_EQ(encode_bio({{"X", 2, 3}, {"Y", 0, 1}}, 3), (Labels{"B-Y", "O", "B-X"}));
}

TEST(EncodeBio, Errors) {
  EXPECT_EQ(code_of([] { encode_bio({{"X", 0, 2}, {"Y", 1, 3}}, 3); }), ErrorCode::OverlappingSpans);
  EXPECT_EQ(code_of([] { encode_bio({{"X", 1, 4}}, 3); }), ErrorCode::OutOfBounds);
  EXPECT_EQ(code_of([] { encode_bio({{"X", 1, 1}}, 3); }), ErrorCode::OutOfBounds);
}

TEST(ValidateBio, Examples) {
  EXPECT_TRUE(validate_bio({"B-X", "I-X"}).empty());
  const auto orphan = validate_bio({"I-X"});
  ASSERT_EQ(orphan.size(), 1u);
  EXPECT_EQ(orphan[0].position, 0u);
  const auto sw = validate_bio({"B-X", "I-Y"});
  ASSERT_EQ(sw.size(), 1u);
  EXPECT_EQ(sw[0].position, 1u);
  const auto bad = validate_bio({"O", "Q"});
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].position, 1u);
}

TEST(Inventory, TypesAndLabels) {
  const std::vector<LabeledSequence> seqs{{{"a", "b", "c"}, {"B-Gene", "I-Gene", "I-Chemical"}}};
  EXPECT_EQ(entity_types(seqs), (Labels{"Chemical", "Gene"}));
  EXPECT_EQ(label_inventory({"A", "B"}), (Labels{"O", "B-A", "I-A", "B-B", "I-B"}));
}

// Exhaustive comparison against the by-definition decoder.
TEST(DecodeBio, MatchesBruteForceUpToLength6) {
  const Labels alphabet{"O", "B-A", "I-A", "B-B", "I-B"};
  std::size_t checked = 0;
  std::function<void(Labels&)> rec = [&](Labels& cur) {
    std::set<oracle::Span> got;
    for (const auto& s : decode_bio(cur)) got.emplace(s.entity_type, s.start, s.end);
    ASSERT_EQ(got, oracle::spans_by_definition(cur));
    ++checked;
    if (cur.size() == 6) return;
    for (const auto& l : alphabet) {
      cur.push_back(l);
      rec(cur);
      cur.pop_back();
    }
  };
  Labels cur;
  rec(cur);
  EXPECT_EQ(checked, 1u + 5 + 25 + 125 + 625 + 3125 + 15625);
}

TEST(Roundtrip, RandomSpanSets) {
  Rng rng(7);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t n = rng.below(12);
    std::vector<EntitySpan> spans;
    std::size_t i = 0;
    while (i < n) {
      if (rng.bernoulli(0.4)) {
        const std::size_t len = 1 + rng.below(std::min<std::size_t>(3, n - i));
        spans.push_back({rng.bernoulli(0.5) ? "A" : "B", i, i + len});
        i += len;
      } else {
        ++i;
      }
    }
    const auto labels = encode_bio(spans, n);
    EXPECT_TRUE(validate_bio(labels).empty());
    EXPECT_EQ(decode_bio(labels), spans);
  }
}

TEST(Roundtrip, RepairYieldsCleanLabels) {
  Rng rng(11);
  for (int rep = 0; rep < 2000; ++rep) {
    const auto labels = oracle::random_labels(rng, rng.below(10), {"A", "B"});
    const auto spans = decode_bio(labels);
    const auto repaired = encode_bio(spans, labels.size());
    EXPECT_TRUE(validate_bio(repaired).empty());
    EXPECT_EQ(decode_bio(repaired), spans);
  }
}

}  // namespace
}  // namespace peftner::corpus
