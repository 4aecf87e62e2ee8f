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
#include <map>
#include <string>
#include <vector>

#include "peftner/corpus.hpp"

namespace peftner::eval {

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const Counts&) const = default;
};

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Counts counts;
};

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 their harmonic mean; every 0/0 is 0.
Scores scores_from_counts(const Counts& counts);

struct EvalReport {
  std::map<std::string, Scores> per_type;
  Scores micro;

  /// Aligned plain-text table, one row per type plus a micro row.
  std::string to_table() const;
  /// `key=value` lines (micro.f1=..., type.<T>.precision=...).
  std::string to_key_values() const;
};

/// Exact-match entity scoring: a predicted span counts only when type, start
/// and end all equal a gold span. Throws ShapeMismatch when sentences or
/// lengths disagree.
EvalReport score_entities(const std::vector<corpus::LabeledSequence>& gold,
                          const std::vector<corpus::LabeledSequence>& pred);
EvalReport score_labels(const std::vector<std::vector<std::string>>& gold,
                        const std::vector<std::vector<std::string>>& pred);

/// Per-sentence micro counts, the unit the randomization test swaps.
std::vector<Counts> sentence_counts(const std::vector<std::vector<std::string>>& gold,
                                    const std::vector<std::vector<std::string>>& pred);

struct SignificanceResult {
  double observed = 0.0;
  double p_value = 1.0;
  std::size_t iterations = 0;
};

/// Approximate randomization over sentences: each iteration swaps the two
/// systems' outputs for a sentence with probability 1/2 and recomputes
/// |F1(A) - F1(B)|. p = (#{resampled >= observed} + 1) / (iterations + 1).
/// Iteration i draws from its own stream derived from `seed`, so the result
/// does not depend on `workers`.
SignificanceResult approx_randomization_test(const std::vector<std::vector<std::string>>& gold,
                                             const std::vector<std::vector<std::string>>& pred_a,
                                             const std::vector<std::vector<std::string>>& pred_b,
                                             std::size_t iterations, std::uint64_t seed,
                                             std::size_t workers = 1);

/// (1 - adapted / base) * 100; negative when the adapted model is worse.
double perplexity_reduction(double base_ppl, double adapted_ppl);

}  // namespace peftner::eval
