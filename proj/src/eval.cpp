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

#include "peftner/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "peftner/error.hpp"
#include "peftner/parallel.hpp"
#include "peftner/rng.hpp"

namespace peftner::eval {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void check_aligned(const std::vector<std::vector<std::string>>& gold,
                   const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gold has " + std::to_string(gold.size()) +
                                              " sentences, prediction " + std::to_string(pred.size()));
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) {
      throw Error(ErrorCode::ShapeMismatch, "sentence " + std::to_string(i) + " has " +
                                                std::to_string(gold[i].size()) + " gold and " +
                                                std::to_string(pred[i].size()) + " predicted labels");
    }
  }
}

std::map<std::string, Counts> count_sentence(const std::vector<std::string>& gold,
                                             const std::vector<std::string>& pred) {
  std::map<std::string, Counts> out;
  const auto gold_spans = corpus::decode_bio(gold);
  const auto pred_spans = corpus::decode_bio(pred);
  const std::set<corpus::EntitySpan> gold_set(gold_spans.begin(), gold_spans.end());
  const std::set<corpus::EntitySpan> pred_set(pred_spans.begin(), pred_spans.end());
  for (const auto& s : pred_spans) {
    if (gold_set.count(s)) {
      ++out[s.entity_type].tp;
    } else {
      ++out[s.entity_type].fp;
    }
  }
  for (const auto& s : gold_spans) {
    if (!pred_set.count(s)) ++out[s.entity_type].fn;
  }
  return out;
}

std::vector<std::vector<std::string>> labels_of(const std::vector<corpus::LabeledSequence>& seqs) {
  std::vector<std::vector<std::string>> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(s.labels);
  return out;
}

}  // namespace

Scores scores_from_counts(const Counts& counts) {
  Scores s;
  s.counts = counts;
  s.precision = ratio(counts.tp, counts.tp + counts.fp);
  s.recall = ratio(counts.tp, counts.tp + counts.fn);
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
  return s;
}

std::string EvalReport::to_table() const {
  std::size_t width = 5;
  for (const auto& [type, _] : per_type) width = std::max(width, type.size());
  auto row = [&](const std::string& name, const Scores& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %9.4f  %9.4f  %7zu  %7zu  %7zu\n", static_cast<int>(width),
                  name.c_str(), s.precision, s.recall, s.f1, s.counts.tp, s.counts.fp, s.counts.fn);
    return std::string(buf);
  };
  char header[256];
  std::snprintf(header, sizeof header, "%-*s  %9s  %9s  %9s  %7s  %7s  %7s\n", static_cast<int>(width), "type",
                "precision", "recall", "f1", "tp", "fp", "fn");
  std::string out = header;
  for (const auto& [type, s] : per_type) out += row(type, s);
  out += row("micro", micro);
  return out;
}

std::string EvalReport::to_key_values() const {
  std::string out;
  auto emit = [&](const std::string& prefix, const Scores& s) {
    out += prefix + ".precision=" + fmt(s.precision) + "\n";
    out += prefix + ".recall=" + fmt(s.recall) + "\n";
    out += prefix + ".f1=" + fmt(s.f1) + "\n";
    out += prefix + ".tp=" + std::to_string(s.counts.tp) + "\n";
    out += prefix + ".fp=" + std::to_string(s.counts.fp) + "\n";
    out += prefix + ".fn=" + std::to_string(s.counts.fn) + "\n";
  };
  emit("micro", micro);
  for (const auto& [type, s] : per_type) emit("type." + type, s);
  return out;
}

EvalReport score_labels(const std::vector<std::vector<std::string>>& gold,
                        const std::vector<std::vector<std::string>>& pred) {
  check_aligned(gold, pred);
  std::map<std::string, Counts> totals;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& [type, c] : count_sentence(gold[i], pred[i])) totals[type] += c;
  }
  EvalReport report;
  Counts micro;
  for (const auto& [type, c] : totals) {
    report.per_type[type] = scores_from_counts(c);
    micro += c;
  }
  report.micro = scores_from_counts(micro);
  return report;
}

EvalReport score_entities(const std::vector<corpus::LabeledSequence>& gold,
                          const std::vector<corpus::LabeledSequence>& pred) {
  return score_labels(labels_of(gold), labels_of(pred));
}

std::vector<Counts> sentence_counts(const std::vector<std::vector<std::string>>& gold,
                                    const std::vector<std::vector<std::string>>& pred) {
  check_aligned(gold, pred);
  std::vector<Counts> out(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& [type, c] : count_sentence(gold[i], pred[i])) out[i] += c;
  }
  return out;
}

SignificanceResult approx_randomization_test(const std::vector<std::vector<std::string>>& gold,
                                             const std::vector<std::vector<std::string>>& pred_a,
                                             const std::vector<std::vector<std::string>>& pred_b,
                                             std::size_t iterations, std::uint64_t seed,
                                             std::size_t workers) {
  const auto a = sentence_counts(gold, pred_a);
  const auto b = sentence_counts(gold, pred_b);
  Counts total_a, total_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    total_a += a[i];
    total_b += b[i];
  }
  SignificanceResult result;
  result.iterations = iterations;
  result.observed = std::abs(scores_from_counts(total_a).f1 - scores_from_counts(total_b).f1);

  std::vector<std::uint8_t> extreme(iterations, 0);
  parallel_for(iterations, workers, [&](std::size_t it, std::size_t) {
    Rng rng(derive_seed(seed, {it}));
    Counts sa, sb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (rng.bernoulli(0.5)) {
        sa += b[i];
        sb += a[i];
      } else {
        sa += a[i];
        sb += b[i];
      }
    }
    const double stat = std::abs(scores_from_counts(sa).f1 - scores_from_counts(sb).f1);
    extreme[it] = stat >= result.observed ? 1 : 0;
  });
  std::size_t count = 0;
  for (auto e : extreme) count += e;
  result.p_value = static_cast<double>(count + 1) / static_cast<double>(iterations + 1);
  return result;
}

double perplexity_reduction(double base_ppl, double adapted_ppl) {
  if (!(base_ppl > 0.0)) throw Error(ErrorCode::InvalidConfig, "base perplexity must be positive");
  return (1.0 - adapted_ppl / base_ppl) * 100.0;
}

}  // namespace peftner::eval
