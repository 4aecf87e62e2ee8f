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
#include <functional>
#include <optional>
#include <string>

#include "peftner/carbon.hpp"
#include "peftner/config.hpp"
#include "peftner/eval.hpp"

namespace peftner::pipeline {

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  std::string out_dir = ".";
  std::size_t workers = 1;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

// Fixed artifact names under the output directory.
inline constexpr const char* kTrainFile = "train.conll";
inline constexpr const char* kDevFile = "dev.conll";
inline constexpr const char* kTestFile = "test.conll";
inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kBackboneFile = "backbone.bin";
inline constexpr const char* kDaptAdapterFile = "dapt_adapter.bin";
inline constexpr const char* kDaptLogFile = "dapt_log.txt";
inline constexpr const char* kPerplexityFile = "perplexity.txt";
inline constexpr const char* kAdapterFile = "adapter.bin";
inline constexpr const char* kHeadFile = "head.bin";
inline constexpr const char* kFinetuneLogFile = "finetune_log.txt";
inline constexpr const char* kJournalFile = "hpo_journal.txt";
inline constexpr const char* kBestConfigFile = "best_config.txt";
inline constexpr const char* kEvalReportFile = "eval_report.txt";
inline constexpr const char* kSignificanceFile = "significance.txt";
inline constexpr const char* kPredictionsFile = "predictions.conll";
inline constexpr const char* kCarbonFile = "carbon.txt";

/// "# peftner stage=<stage> seed=<seed> config=<hash>"
std::string provenance_header(config::Stage stage, const config::RunConfig& cfg);

/// Writes train/dev/test splits of the bundled synthetic corpus.
void cmd_synth(const CommandOptions& options);

/// Builds the vocabulary, initializes the seeded base backbone, runs DAPT and
/// writes the merged backbone, the DAPT adapter, the log and the perplexity
/// report. Returns the perplexity reduction in percent.
double cmd_dapt(const CommandOptions& options);

/// Fine-tunes a fresh adapter and head on the backbone. Returns the best dev
/// micro-F1.
double cmd_finetune(const CommandOptions& options);

/// Runs (or resumes) the TPE study over the fine-tuning space. Returns the
/// best dev micro-F1.
double cmd_hpo(const CommandOptions& options);

struct EvaluateOutcome {
  eval::EvalReport report;
  std::optional<eval::SignificanceResult> comparison;
  bool significant = false;
};

/// Scores the test split, either from paths.predictions or by tagging it with
/// the fine-tuned model. With paths.predictions_b also runs the approximate
/// randomization test between the two systems.
EvaluateOutcome cmd_evaluate(const CommandOptions& options);

/// Tags token-per-line input and writes CoNLL with predicted labels.
void cmd_predict(const CommandOptions& options);

carbon::CarbonReport cmd_carbon(const CommandOptions& options);

}  // namespace peftner::pipeline
