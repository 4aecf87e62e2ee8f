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
#include <span>
#include <string>
#include <vector>

#include "peftner/autodiff.hpp"
#include "peftner/corpus.hpp"
#include "peftner/encoder.hpp"
#include "peftner/lora.hpp"
#include "peftner/rng.hpp"
#include "peftner/textprep.hpp"

namespace peftner::train {

using textprep::PieceId;

/// Target value for positions that do not contribute to a loss.
inline constexpr std::int32_t kIgnore = -1;

struct TrainPlan {
  double peak_lr = 3e-5;
  std::size_t batch_size = 16;
  double weight_decay = 0.01;
  double warmup_ratio = 0.1;
  std::optional<std::size_t> warmup_steps;  // absolute steps; overrides warmup_ratio
  std::size_t epochs = 10;
  std::size_t patience = 3;
  double label_smoothing = 0.1;
  std::size_t grad_accum_steps = 1;
  std::uint64_t seed = 42;
  double min_delta = 1e-4;
  double mask_rate = 0.15;

  void validate() const;
  std::size_t warmup_for(std::size_t total_steps) const;

  /// lr 2e-4, batch 64 with 2 accumulation steps, 3 epochs, 500 warmup steps.
  static TrainPlan dapt_defaults();
  /// warmup 10%, label smoothing 0.1, patience 3.
  static TrainPlan finetune_defaults();
};

/// Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay to 0
/// at `total_steps`. Throws InvalidConfig unless warmup < total_steps and
/// step <= total_steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup, double peak);
double lr_at(std::size_t step, std::size_t total_steps, const TrainPlan& plan);

// ---- masking ---------------------------------------------------------------

enum class Corruption : std::uint8_t { None = 0, Mask = 1, Random = 2, Kept = 3 };

struct MaskingOutcome {
  std::vector<std::vector<PieceId>> input_ids;
  std::vector<std::vector<std::int32_t>> targets;  // original id where selected, kIgnore elsewhere
  std::vector<std::vector<Corruption>> corruption;
};

/// Selects each non-special position with probability `rate`; selected
/// positions become [MASK] (80%), a random non-special id (10%) or stay (10%).
MaskingOutcome mask_batch(const std::vector<std::vector<PieceId>>& batch, double rate,
                          std::size_t vocab_size, Rng& rng);

// ---- losses and optimizer --------------------------------------------------

/// Mean over active rows of (1-eps)(-log p_t) + eps * mean_c(-log p_c).
ad::Tensor label_smoothed_ce(const ad::Tensor& logits, std::span<const std::int32_t> targets,
                             double eps);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

/// One AdamW update. `decay[i]` selects which tensors receive weight decay
/// (empty means all). Decay is decoupled: p -= lr * wd * p before the
/// bias-corrected adaptive step.
void adamw_step(std::span<ad::Tensor* const> params, const std::vector<std::vector<double>>& grads,
                AdamWState& state, double lr, double weight_decay, const std::vector<bool>& decay = {},
                const AdamWHyper& hyper = {});

// ---- models ----------------------------------------------------------------

struct TaggerModel {
  encoder::Encoder encoder;
  encoder::ClassifierHead head;  // empty during DAPT
};

/// Leaves with requires_grad: base parameters, then adapter factors by layer
/// and target, then the classifier head.
std::vector<ad::Tensor*> trainable_parameters(TaggerModel& model);

/// Copy whose trainable leaves own fresh storage; frozen tensors stay shared.
TaggerModel clone_trainable(const TaggerModel& model);

// ---- data ------------------------------------------------------------------

struct TaggingExample {
  std::vector<PieceId> ids;          // [CLS] window [SEP]
  std::vector<std::int32_t> targets;  // label index on first pieces, kIgnore elsewhere
};

std::vector<TaggingExample> make_tagging_examples(const std::vector<corpus::LabeledSequence>& data,
                                                  const textprep::Vocabulary& vocab,
                                                  const std::vector<std::string>& labels,
                                                  std::size_t max_len = textprep::kDefaultMaxLen,
                                                  std::size_t overlap = textprep::kDefaultOverlap);

/// [CLS] window [SEP] piece sequences for masked-language modeling.
std::vector<std::vector<PieceId>> make_mlm_sequences(const std::vector<std::vector<std::string>>& sentences,
                                                     const textprep::Vocabulary& vocab,
                                                     std::size_t max_len = textprep::kDefaultMaxLen,
                                                     std::size_t overlap = textprep::kDefaultOverlap);

/// Chunks the sentence, tags each window, stitches by center priority and
/// labels each word by its first piece. The result is repaired to valid BIO.
std::vector<std::string> predict_labels(const TaggerModel& model, const textprep::Vocabulary& vocab,
                                        std::span<const std::string> words,
                                        std::size_t max_len = textprep::kDefaultMaxLen,
                                        std::size_t overlap = textprep::kDefaultOverlap);

std::vector<std::vector<std::string>> predict_corpus(const TaggerModel& model,
                                                     const textprep::Vocabulary& vocab,
                                                     const std::vector<std::vector<std::string>>& sentences,
                                                     std::size_t workers = 1,
                                                     std::size_t max_len = textprep::kDefaultMaxLen,
                                                     std::size_t overlap = textprep::kDefaultOverlap);

// ---- early stopping ---------------------------------------------------------

class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta);

  /// Records one epoch's score; returns true when it is a new best.
  bool update(double score);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_score() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = 0.0;
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t stale_ = 0;
};

// ---- stage drivers ---------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double metric = 0.0;  // dev micro-F1 or held-out perplexity
  double lr = 0.0;
};

std::string format_epoch(const EpochLog& log, const std::string& metric_name);

using LogSink = std::function<void(const std::string&)>;

/// exp(mean NLL) over the positions selected by a masking pass seeded with
/// `seed`. `logits_fn(input_ids, positions)` returns one logits row per
/// position. Throws EmptyCorpus when nothing gets selected.
using MlmLogitsFn =
    std::function<ad::Tensor(std::span<const PieceId> input_ids, std::span<const std::int32_t> positions)>;
double perplexity(const std::vector<std::vector<PieceId>>& corpus, std::size_t vocab_size,
                  const MlmLogitsFn& logits_fn, std::uint64_t seed, double rate = 0.15);
double perplexity(const encoder::Encoder& model, const std::vector<std::vector<PieceId>>& corpus,
                  std::uint64_t seed, double rate = 0.15, std::size_t workers = 1);

struct DaptResult {
  encoder::Encoder merged;
  lora::AdapterState adapter;
  double base_perplexity = 0.0;
  double final_perplexity = 0.0;
  std::vector<EpochLog> history;
};

/// Injects an adapter into a copy of `base`, trains it with the tied MLM head
/// and returns the merged backbone. Held-out perplexity is measured before
/// training and after each epoch with one fixed masking pass.
DaptResult train_dapt(const encoder::Encoder& base, const std::vector<std::vector<PieceId>>& train_seqs,
                      const std::vector<std::vector<PieceId>>& heldout_seqs, const lora::LoraConfig& lora,
                      const TrainPlan& plan, std::size_t workers = 1, const LogSink& log = {});

struct FinetuneResult {
  TaggerModel best;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  std::vector<EpochLog> history;
};

/// Trains the adapter and head of `model`; after each epoch scores the dev set
/// and stops after `plan.patience` epochs without improvement. Returns the
/// best-epoch checkpoint. Throws EmptyDevSet.
FinetuneResult train_finetune(const TaggerModel& model, const textprep::Vocabulary& vocab,
                              const std::vector<corpus::LabeledSequence>& train_set,
                              const std::vector<corpus::LabeledSequence>& dev_set, const TrainPlan& plan,
                              std::size_t workers = 1, const LogSink& log = {});

// ---- gradient engine (exposed for tests) -----------------------------------

struct ExampleLoss {
  ad::Tensor loss_sum;  // undefined when the example has no active rows
  std::size_t active = 0;
};

using ExampleFn = std::function<ExampleLoss(TaggerModel& replica, std::size_t example, Rng& rng)>;

/// Computes per-example gradients on worker replicas and reduces them in
/// example order, so the sums do not depend on the worker count.
class GradientEngine {
 public:
  GradientEngine(TaggerModel& master, std::size_t workers);

  std::size_t num_parameters() const { return master_params_.size(); }
  std::span<ad::Tensor* const> parameters() const { return master_params_; }

  /// Adds the gradient of the summed loss over `examples` into `grads`
  /// (resized on first use) and returns {loss sum, active rows}.
  std::pair<double, std::size_t> accumulate(std::span<const std::size_t> examples,
                                            std::span<const std::uint64_t> seeds, const ExampleFn& fn,
                                            std::vector<std::vector<double>>& grads);

 private:
  void sync();

  TaggerModel& master_;
  std::vector<ad::Tensor*> master_params_;
  std::vector<TaggerModel> replicas_;
  std::vector<std::vector<ad::Tensor*>> replica_params_;
};

}  // namespace peftner::train
