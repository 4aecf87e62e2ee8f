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

#include "peftner/textprep.hpp"

#include <algorithm>
#include <limits>

#include "peftner/error.hpp"

namespace peftner::textprep {

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;
}

constexpr std::size_t kMaxPieceChars = 16;

}  // namespace

std::vector<std::string_view> utf8_chars(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

const std::vector<std::string>& Vocabulary::reserved_pieces() {
  static const std::vector<std::string> reserved{"[PAD]", "[UNK]", "[MASK]", "[CLS]", "[SEP]"};
  return reserved;
}

Vocabulary::Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  const auto& reserved = reserved_pieces();
  if (pieces_.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), pieces_.begin())) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary must start with the reserved pieces");
  }
  index_.reserve(pieces_.size());
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw Error(ErrorCode::InvalidConfig, "empty vocabulary piece");
    if (!index_.emplace(pieces_[i], static_cast<PieceId>(i)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate vocabulary piece '" + pieces_[i] + "'");
    }
    if (i >= kReserved) max_piece_chars_ = std::max(max_piece_chars_, utf8_chars(pieces_[i]).size());
  }
}

std::optional<PieceId> Vocabulary::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& p : pieces_) {
    out += p;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    pieces.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return Vocabulary(std::move(pieces));
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences,
                       std::size_t target_size) {
  // Distinct words in first-occurrence order, with frequencies.
  std::vector<std::string_view> words;
  std::unordered_map<std::string_view, std::size_t> word_freq;
  for (const auto& sentence : sentences) {
    for (const auto& w : sentence) {
      if (w.empty()) continue;
      auto [it, inserted] = word_freq.emplace(w, 0);
      if (inserted) words.push_back(w);
      ++it->second;
    }
  }
  if (words.empty()) throw Error(ErrorCode::CorpusEmpty, "cannot build a vocabulary from no words");

  struct Candidate {
    std::size_t count = 0;
    std::size_t first_seen = 0;
    std::size_t chars = 0;
  };
  std::vector<std::string> chars;
  std::unordered_map<std::string, std::size_t> char_seen;
  std::unordered_map<std::string, Candidate> substrings;
  std::vector<std::string> substring_order;

  for (std::string_view word : words) {
    const std::size_t freq = word_freq[word];
    const auto units = utf8_chars(word);
    for (auto u : units) {
      if (char_seen.emplace(std::string(u), chars.size()).second) chars.emplace_back(u);
    }
    for (std::size_t i = 0; i < units.size(); ++i) {
      const char* begin = units[i].data();
      for (std::size_t len = 2; len <= kMaxPieceChars && i + len <= units.size(); ++len) {
        const auto& last = units[i + len - 1];
        std::string sub(begin, static_cast<std::size_t>(last.data() + last.size() - begin));
        auto [it, inserted] = substrings.try_emplace(sub);
        if (inserted) {
          it->second.first_seen = substring_order.size();
          it->second.chars = len;
          substring_order.push_back(sub);
        }
        it->second.count += freq;
      }
    }
  }

  const std::size_t minimum = Vocabulary::kReserved + chars.size();
  if (target_size < minimum) {
    throw Error(ErrorCode::VocabTooSmall, "target size " + std::to_string(target_size) +
                                              " below minimum " + std::to_string(minimum));
  }

  std::vector<const std::string*> ranked;
  ranked.reserve(substring_order.size());
  for (const auto& s : substring_order) ranked.push_back(&s);
  std::sort(ranked.begin(), ranked.end(), [&](const std::string* a, const std::string* b) {
    const auto& ca = substrings.at(*a);
    const auto& cb = substrings.at(*b);
    if (ca.count != cb.count) return ca.count > cb.count;
    if (ca.chars != cb.chars) return ca.chars > cb.chars;
    return ca.first_seen < cb.first_seen;
  });

  std::vector<std::string> pieces = Vocabulary::reserved_pieces();
  // A corpus character could collide with a reserved spelling only if a word
  // were literally "[PAD]" etc.; single characters never do.
  pieces.insert(pieces.end(), chars.begin(), chars.end());
  for (const std::string* s : ranked) {
    if (pieces.size() >= target_size) break;
    if (std::find(Vocabulary::reserved_pieces().begin(), Vocabulary::reserved_pieces().end(), *s) !=
        Vocabulary::reserved_pieces().end()) {
      continue;
    }
    pieces.push_back(*s);
  }
  return Vocabulary(std::move(pieces));
}

Vocabulary build_vocab(const std::vector<corpus::LabeledSequence>& corpus, std::size_t target_size) {
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& seq : corpus) sentences.push_back(seq.words);
  return build_vocab(sentences, target_size);
}

std::vector<PieceId> tokenize_word(std::string_view word, const Vocabulary& vocab) {
  std::vector<PieceId> out;
  const auto units = utf8_chars(word);
  std::size_t i = 0;
  while (i < units.size()) {
    std::size_t longest = std::min(vocab.max_piece_chars(), units.size() - i);
    bool matched = false;
    for (std::size_t len = longest; len >= 1; --len) {
      const auto& last = units[i + len - 1];
      std::string_view candidate(units[i].data(),
                                 static_cast<std::size_t>(last.data() + last.size() - units[i].data()));
      if (auto id = vocab.find(candidate); id && !vocab.is_special(*id)) {
        out.push_back(*id);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      out.push_back(Vocabulary::kUnk);
      ++i;
    }
  }
  return out;
}

std::vector<std::optional<std::string>> align_labels(const corpus::LabeledSequence& seq,
                                                     std::span<const std::size_t> pieces_per_word) {
  if (pieces_per_word.size() != seq.words.size() || seq.labels.size() != seq.words.size()) {
    throw Error(ErrorCode::LengthMismatch, "pieces_per_word has " +
                                               std::to_string(pieces_per_word.size()) +
                                               " entries for " + std::to_string(seq.words.size()) +
                                               " words");
  }
  std::vector<std::optional<std::string>> out;
  for (std::size_t w = 0; w < seq.words.size(); ++w) {
    if (pieces_per_word[w] == 0) {
      throw Error(ErrorCode::LengthMismatch, "word " + std::to_string(w) + " has no pieces");
    }
    out.emplace_back(seq.labels[w]);
    for (std::size_t k = 1; k < pieces_per_word[w]; ++k) out.emplace_back(std::nullopt);
  }
  return out;
}

TokenizedSentence tokenize_sentence(std::span<const std::string> words, const Vocabulary& vocab) {
  TokenizedSentence out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    auto pieces = tokenize_word(words[w], vocab);
    // An empty word still needs an anchor piece for its label.
    if (pieces.empty()) pieces.push_back(Vocabulary::kUnk);
    out.pieces_per_word.push_back(pieces.size());
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      out.piece_ids.push_back(pieces[k]);
      out.word_of_piece.push_back(k == 0 ? std::optional<std::size_t>(w) : std::nullopt);
    }
  }
  return out;
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t max_len, std::size_t overlap) {
  if (max_len == 0 || overlap >= max_len) {
    throw Error(ErrorCode::InvalidWindow, "overlap " + std::to_string(overlap) +
                                              " must be smaller than max_len " +
                                              std::to_string(max_len));
  }
  std::vector<std::size_t> starts{0};
  if (n <= max_len) return starts;
  const std::size_t stride = max_len - overlap;
  while (starts.back() + max_len < n) {
    const std::size_t next = starts.back() + stride;
    starts.push_back(next + max_len >= n ? n - max_len : next);
  }
  return starts;
}

std::vector<Chunk> chunk_sequence(const TokenizedSentence& sentence, std::size_t max_len,
                                  std::size_t overlap) {
  const std::size_t n = sentence.piece_ids.size();
  std::vector<Chunk> chunks;
  for (std::size_t start : window_starts(n, max_len, overlap)) {
    const std::size_t end = std::min(n, start + max_len);
    Chunk chunk;
    chunk.window_start = start;
    chunk.piece_ids.assign(sentence.piece_ids.begin() + static_cast<std::ptrdiff_t>(start),
                           sentence.piece_ids.begin() + static_cast<std::ptrdiff_t>(end));
    chunk.word_index_of_piece.assign(
        sentence.word_of_piece.begin() + static_cast<std::ptrdiff_t>(start),
        sentence.word_of_piece.begin() + static_cast<std::ptrdiff_t>(end));
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

std::vector<Chunk> chunk_sequence(std::span<const PieceId> piece_ids, std::size_t max_len,
                                  std::size_t overlap) {
  TokenizedSentence sentence;
  sentence.piece_ids.assign(piece_ids.begin(), piece_ids.end());
  sentence.word_of_piece.assign(piece_ids.size(), std::nullopt);
  return chunk_sequence(sentence, max_len, overlap);
}

std::vector<int> stitch_predictions(const std::vector<WindowPrediction>& windows) {
  std::size_t n = 0;
  for (const auto& w : windows) n = std::max(n, w.window_start + w.predictions.size());

  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return windows[a].window_start < windows[b].window_start;
  });

  std::vector<int> out(n, 0);
  std::vector<std::ptrdiff_t> best_distance(n, -1);
  for (std::size_t idx : order) {
    const auto& w = windows[idx];
    const std::size_t len = w.predictions.size();
    for (std::size_t k = 0; k < len; ++k) {
      const auto distance = static_cast<std::ptrdiff_t>(std::min(k, len - 1 - k));
      const std::size_t pos = w.window_start + k;
      // Strictly greater keeps the earlier window on ties.
      if (distance > best_distance[pos]) {
        best_distance[pos] = distance;
        out[pos] = w.predictions[k];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (best_distance[i] < 0) {
      throw Error(ErrorCode::CoverageGap, "position " + std::to_string(i) + " is in no window");
    }
  }
  return out;
}

}  // namespace peftner::textprep
