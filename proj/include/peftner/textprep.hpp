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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "peftner/corpus.hpp"

namespace peftner::textprep {

using PieceId = std::int32_t;

/// Piece inventory with the five reserved symbols at ids 0..4.
class Vocabulary {
 public:
  static constexpr PieceId kPad = 0;
  static constexpr PieceId kUnk = 1;
  static constexpr PieceId kMask = 2;
  static constexpr PieceId kCls = 3;
  static constexpr PieceId kSep = 4;
  static constexpr std::size_t kReserved = 5;

  static const std::vector<std::string>& reserved_pieces();

  /// Throws InvalidConfig when the reserved pieces are missing or any piece repeats.
  explicit Vocabulary(std::vector<std::string> pieces);

  std::size_t size() const { return pieces_.size(); }
  const std::string& piece(PieceId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  std::optional<PieceId> find(std::string_view piece) const;
  /// Longest piece length in code points.
  std::size_t max_piece_chars() const { return max_piece_chars_; }
  bool is_special(PieceId id) const { return id >= 0 && static_cast<std::size_t>(id) < kReserved; }

  /// One piece per line; line number is the id.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);

  bool operator==(const Vocabulary& other) const { return pieces_ == other.pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, PieceId> index_;
  std::size_t max_piece_chars_ = 1;
};

/// Splits UTF-8 text into code points (invalid bytes become single-byte units).
std::vector<std::string_view> utf8_chars(std::string_view text);

/// Greedy frequency-ranked piece inventory: reserved symbols, every character
/// seen (first-occurrence order), then multi-character substrings by
/// descending count (ties: longer first, then first occurrence) up to
/// `target_size`. Throws CorpusEmpty / VocabTooSmall.
Vocabulary build_vocab(const std::vector<corpus::LabeledSequence>& corpus, std::size_t target_size);
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t target_size);

/// Greedy longest-match-first segmentation; unknown characters map to UNK.
std::vector<PieceId> tokenize_word(std::string_view word, const Vocabulary& vocab);

/// First piece of each word carries its label, everything else is nullopt
/// (ignored by loss and scoring). Throws LengthMismatch.
std::vector<std::optional<std::string>> align_labels(const corpus::LabeledSequence& seq,
                                                     std::span<const std::size_t> pieces_per_word);

/// A sentence tokenized into pieces, with the owning word of every first piece.
struct TokenizedSentence {
  std::vector<PieceId> piece_ids;
  std::vector<std::optional<std::size_t>> word_of_piece;
  std::vector<std::size_t> pieces_per_word;
};

TokenizedSentence tokenize_sentence(std::span<const std::string> words, const Vocabulary& vocab);

struct Chunk {
  std::vector<PieceId> piece_ids;
  std::vector<std::optional<std::size_t>> word_index_of_piece;
  std::size_t window_start = 0;
};

inline constexpr std::size_t kDefaultMaxLen = 256;
inline constexpr std::size_t kDefaultOverlap = 50;

/// Window start offsets for a sequence of n pieces. Windows advance by
/// max_len - overlap; the last one is shifted left to end exactly at n.
std::vector<std::size_t> window_starts(std::size_t n, std::size_t max_len, std::size_t overlap);

std::vector<Chunk> chunk_sequence(std::span<const PieceId> piece_ids,
                                  std::size_t max_len = kDefaultMaxLen,
                                  std::size_t overlap = kDefaultOverlap);
std::vector<Chunk> chunk_sequence(const TokenizedSentence& sentence,
                                  std::size_t max_len = kDefaultMaxLen,
                                  std::size_t overlap = kDefaultOverlap);

struct WindowPrediction {
  std::size_t window_start = 0;
  std::vector<int> predictions;
};

/// Merges overlapping window outputs. Each position takes the prediction of
/// the window where it sits farthest from the nearer window edge; ties go to
/// the earlier window. Throws CoverageGap.
std::vector<int> stitch_predictions(const std::vector<WindowPrediction>& windows);

}  // namespace peftner::textprep
