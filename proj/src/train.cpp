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

#include "peftner/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "peftner/error.hpp"
#include "peftner/eval.hpp"
#include "peftner/parallel.hpp"

namespace peftner::train {

namespace {

using textprep::Vocabulary;

// Stream tags for derive_seed.
constexpr std::uint64_t kShuffleTag = 1;
constexpr std::uint64_t kExampleTag = 2;
constexpr std::uint64_t kPerplexityTag = 3;
constexpr std::uint64_t kInjectTag = 4;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {kShuffleTag, epoch}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void mask_sequence(std::span<const PieceId> ids, double rate, std::size_t vocab_size, Rng& rng,
                   std::vector<PieceId>& out_ids, std::vector<std::int32_t>& targets,
                   std::vector<Corruption>& kinds) {
  out_ids.assign(ids.begin(), ids.end());
  targets.assign(ids.size(), kIgnore);
  kinds.assign(ids.size(), Corruption::None);
  const auto first_regular = static_cast<std::uint64_t>(Vocabulary::kReserved);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < Vocabulary::kReserved) continue;
    if (!rng.bernoulli(rate)) continue;
    targets[i] = ids[i];
    const double u = rng.uniform();
    if (u < 0.8) {
      out_ids[i] = Vocabulary::kMask;
      kinds[i] = Corruption::Mask;
    } else if (u < 0.9) {
      out_ids[i] = static_cast<PieceId>(first_regular + rng.below(vocab_size - first_regular));
      kinds[i] = Corruption::Random;
    } else {
      kinds[i] = Corruption::Kept;
    }
  }
}

std::vector<std::int32_t> active_positions(std::span<const std::int32_t> targets) {
  std::vector<std::int32_t> rows;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] != kIgnore) rows.push_back(static_cast<std::int32_t>(i));
  }
  return rows;
}

ad::Tensor masked_logits(const encoder::Encoder& enc, const encoder::MlmHead& head,
                         std::span<const PieceId> input_ids, std::span<const std::int32_t> positions,
                         encoder::ForwardContext& ctx) {
  const auto hidden = enc.encode(input_ids, ctx);
  return encoder::mlm_logits(ad::embedding_lookup(hidden, positions), head);
}

std::vector<bool> decay_mask(std::span<ad::Tensor* const> params) {
  std::vector<bool> mask;
  mask.reserve(params.size());
  for (const auto* p : params) mask.push_back(p->rank() >= 2);
  return mask;
}

int argmax_row(std::span<const double> v, std::size_t row, std::size_t cols) {
  const double* r = v.data() + row * cols;
  return static_cast<int>(std::max_element(r, r + cols) - r);
}

struct Schedule {
  std::size_t updates_per_epoch = 0;
  std::size_t total = 0;
  std::size_t warmup = 0;
};

Schedule make_schedule(std::size_t n_examples, const TrainPlan& plan) {
  Schedule s;
  const std::size_t micro = ceil_div(n_examples, plan.batch_size);
  s.updates_per_epoch = ceil_div(micro, plan.grad_accum_steps);
  s.total = s.updates_per_epoch * plan.epochs;
  s.warmup = plan.warmup_for(s.total);
  if (s.warmup >= s.total) {
    throw Error(ErrorCode::InvalidConfig, "warmup of " + std::to_string(s.warmup) +
                                              " steps must be shorter than the " + std::to_string(s.total) +
                                              " total optimizer steps");
  }
  return s;
}

// Runs one epoch of micro-batches with accumulation; returns {loss sum, active rows, last lr}.
struct EpochStats {
  double loss_sum = 0.0;
  std::size_t active = 0;
  double lr = 0.0;
};

EpochStats run_epoch(GradientEngine& engine, AdamWState& opt, const std::vector<bool>& decay,
                     std::size_t n_examples, std::size_t epoch, const TrainPlan& plan, const Schedule& sched,
                     const ExampleFn& fn) {
  const auto order = shuffled_order(n_examples, plan.seed, epoch);
  const std::size_t micro_batches = ceil_div(n_examples, plan.batch_size);
  EpochStats stats;
  std::vector<std::vector<double>> grads;
  std::size_t window_active = 0;
  std::size_t in_window = 0;
  for (std::size_t mb = 0; mb < micro_batches; ++mb) {
    const std::size_t begin = mb * plan.batch_size;
    const std::size_t end = std::min(n_examples, begin + plan.batch_size);
    std::span<const std::size_t> examples(order.data() + begin, end - begin);
    std::vector<std::uint64_t> seeds(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
      seeds[i] = derive_seed(plan.seed, {kExampleTag, epoch, examples[i]});
    }
    const auto [loss, active] = engine.accumulate(examples, seeds, fn, grads);
    stats.loss_sum += loss;
    stats.active += active;
    window_active += active;
    ++in_window;
    if (in_window == plan.grad_accum_steps || mb + 1 == micro_batches) {
      if (window_active > 0) {
        const double inv = 1.0 / static_cast<double>(window_active);
        for (auto& g : grads) {
          for (auto& x : g) x *= inv;
        }
      }
      const std::size_t step = opt.step + 1;
      stats.lr = lr_at(step, sched.total, sched.warmup, plan.peak_lr);
      adamw_step(engine.parameters(), grads, opt, stats.lr, plan.weight_decay, decay);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
      window_active = 0;
      in_window = 0;
    }
  }
  return stats;
}

}  // namespace

// ---- plan and schedule -----------------------------------------------------

void TrainPlan::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(peak_lr > 0.0)) fail("peak_lr must be positive");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) fail("warmup_ratio must be in [0, 1)");
  if (epochs < 1) fail("epochs must be at least 1");
  if (patience < 1) fail("patience must be at least 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must be in [0, 1)");
  if (grad_accum_steps < 1) fail("grad_accum_steps must be at least 1");
  if (!(min_delta >= 0.0)) fail("min_delta must be non-negative");
  if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) fail("mask_rate must be in [0, 1]");
}

std::size_t TrainPlan::warmup_for(std::size_t total_steps) const {
  if (warmup_steps) return *warmup_steps;
  return static_cast<std::size_t>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
}

TrainPlan TrainPlan::dapt_defaults() {
  TrainPlan p;
  p.peak_lr = 2e-4;
  p.batch_size = 64;
  p.grad_accum_steps = 2;
  p.epochs = 3;
  p.warmup_steps = 500;
  p.label_smoothing = 0.0;
  p.weight_decay = 0.01;
  return p;
}

TrainPlan TrainPlan::finetune_defaults() {
  TrainPlan p;
  p.warmup_ratio = 0.1;
  p.label_smoothing = 0.1;
  p.patience = 3;
  return p;
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup, double peak) {
  if (warmup >= total_steps) {
    throw Error(ErrorCode::InvalidConfig, "warmup must be shorter than the schedule");
  }
  if (step > total_steps) {
    throw Error(ErrorCode::InvalidConfig,
                "step " + std::to_string(step) + " past schedule end " + std::to_string(total_steps));
  }
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainPlan& plan) {
  return lr_at(step, total_steps, plan.warmup_for(total_steps), plan.peak_lr);
}

// ---- masking ---------------------------------------------------------------

MaskingOutcome mask_batch(const std::vector<std::vector<PieceId>>& batch, double rate,
                          std::size_t vocab_size, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorCode::InvalidConfig, "mask rate must be in [0, 1]");
  if (vocab_size <= Vocabulary::kReserved) {
    throw Error(ErrorCode::VocabTooSmall, "vocabulary has no regular pieces to sample");
  }
  MaskingOutcome out;
  out.input_ids.resize(batch.size());
  out.targets.resize(batch.size());
  out.corruption.resize(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    mask_sequence(batch[s], rate, vocab_size, rng, out.input_ids[s], out.targets[s], out.corruption[s]);
  }
  return out;
}

// ---- losses and optimizer --------------------------------------------------

ad::Tensor label_smoothed_ce(const ad::Tensor& logits, std::span<const std::int32_t> targets, double eps) {
  return ad::smoothed_cross_entropy(logits, targets, eps, ad::Reduction::Mean);
}

void adamw_step(std::span<ad::Tensor* const> params, const std::vector<std::vector<double>>& grads,
                AdamWState& state, double lr, double weight_decay, const std::vector<bool>& decay,
                const AdamWHyper& hyper) {
  if (grads.size() != params.size() || (!decay.empty() && decay.size() != params.size())) {
    throw Error(ErrorCode::ShapeMismatch, "adamw: " + std::to_string(params.size()) + " params, " +
                                              std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->numel(), 0.0);
      state.v.emplace_back(p->numel(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i]->mutable_values();
    const auto& g = grads[i];
    if (g.size() != values.size() || state.m[i].size() != values.size()) {
      throw Error(ErrorCode::ShapeMismatch, "adamw: gradient " + std::to_string(i) + " has wrong size");
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    const double shrink = (decay.empty() || decay[i]) ? lr * weight_decay : 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      values[k] -= shrink * values[k];
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      values[k] -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

// ---- models ----------------------------------------------------------------

std::vector<ad::Tensor*> trainable_parameters(TaggerModel& model) {
  std::vector<ad::Tensor*> out;
  for (auto& p : model.encoder.base_parameters()) {
    if (p.tensor->requires_grad()) out.push_back(p.tensor);
  }
  for (auto& layer : model.encoder.layers()) {
    for (auto t : {lora::Target::Query, lora::Target::Key, lora::Target::Value, lora::Target::Output}) {
      auto& host = lora::projection(layer, t);
      if (!host.delta) continue;
      if (host.delta->a.requires_grad()) out.push_back(&host.delta->a);
      if (host.delta->b.requires_grad()) out.push_back(&host.delta->b);
    }
  }
  if (model.head.weight.defined() && model.head.weight.requires_grad()) out.push_back(&model.head.weight);
  if (model.head.bias.defined() && model.head.bias.requires_grad()) out.push_back(&model.head.bias);
  return out;
}

TaggerModel clone_trainable(const TaggerModel& model) {
  TaggerModel copy = model;
  for (auto* t : trainable_parameters(copy)) *t = t->detach(true);
  return copy;
}

// ---- data ------------------------------------------------------------------

std::vector<TaggingExample> make_tagging_examples(const std::vector<corpus::LabeledSequence>& data,
                                                  const Vocabulary& vocab,
                                                  const std::vector<std::string>& labels,
                                                  std::size_t max_len, std::size_t overlap) {
  std::vector<TaggingExample> out;
  for (const auto& seq : data) {
    if (seq.words.empty()) continue;
    const auto tok = textprep::tokenize_sentence(seq.words, vocab);
    const auto aligned = textprep::align_labels(seq, tok.pieces_per_word);
    std::vector<std::int32_t> piece_targets(aligned.size(), kIgnore);
    for (std::size_t i = 0; i < aligned.size(); ++i) {
      if (!aligned[i]) continue;
      const auto it = std::find(labels.begin(), labels.end(), *aligned[i]);
      if (it == labels.end()) {
        throw Error(ErrorCode::InvalidLabel, "label '" + *aligned[i] + "' not in the head's label set");
      }
      piece_targets[i] = static_cast<std::int32_t>(it - labels.begin());
    }
    for (const auto start : textprep::window_starts(tok.piece_ids.size(), max_len, overlap)) {
      const std::size_t len = std::min(max_len, tok.piece_ids.size() - start);
      TaggingExample ex;
      ex.ids.reserve(len + 2);
      ex.targets.reserve(len + 2);
      ex.ids.push_back(Vocabulary::kCls);
      ex.targets.push_back(kIgnore);
      for (std::size_t k = start; k < start + len; ++k) {
        ex.ids.push_back(tok.piece_ids[k]);
        ex.targets.push_back(piece_targets[k]);
      }
      ex.ids.push_back(Vocabulary::kSep);
      ex.targets.push_back(kIgnore);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<std::vector<PieceId>> make_mlm_sequences(const std::vector<std::vector<std::string>>& sentences,
                                                     const Vocabulary& vocab, std::size_t max_len,
                                                     std::size_t overlap) {
  std::vector<std::vector<PieceId>> out;
  for (const auto& words : sentences) {
    if (words.empty()) continue;
    const auto tok = textprep::tokenize_sentence(words, vocab);
    for (const auto& chunk : textprep::chunk_sequence(tok.piece_ids, max_len, overlap)) {
      std::vector<PieceId> ids;
      ids.reserve(chunk.piece_ids.size() + 2);
      ids.push_back(Vocabulary::kCls);
      ids.insert(ids.end(), chunk.piece_ids.begin(), chunk.piece_ids.end());
      ids.push_back(Vocabulary::kSep);
      out.push_back(std::move(ids));
    }
  }
  return out;
}

std::vector<std::string> predict_labels(const TaggerModel& model, const Vocabulary& vocab,
                                        std::span<const std::string> words, std::size_t max_len,
                                        std::size_t overlap) {
  if (words.empty()) return {};
  const auto tok = textprep::tokenize_sentence(words, vocab);
  const std::size_t n_labels = model.head.num_labels();
  std::vector<textprep::WindowPrediction> windows;
  for (const auto& chunk : textprep::chunk_sequence(tok.piece_ids, max_len, overlap)) {
    std::vector<PieceId> ids;
    ids.reserve(chunk.piece_ids.size() + 2);
    ids.push_back(Vocabulary::kCls);
    ids.insert(ids.end(), chunk.piece_ids.begin(), chunk.piece_ids.end());
    ids.push_back(Vocabulary::kSep);
    encoder::ForwardContext ctx;
    const auto logits = encoder::classifier_logits(model.encoder.encode(ids, ctx), model.head);
    textprep::WindowPrediction wp;
    wp.window_start = chunk.window_start;
    wp.predictions.reserve(chunk.piece_ids.size());
    for (std::size_t k = 0; k < chunk.piece_ids.size(); ++k) {
      wp.predictions.push_back(argmax_row(logits.values(), k + 1, n_labels));
    }
    windows.push_back(std::move(wp));
  }
  const auto stitched = textprep::stitch_predictions(windows);
  std::vector<std::string> raw(words.size());
  std::size_t piece = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    raw[w] = model.head.labels.at(static_cast<std::size_t>(stitched[piece]));
    piece += tok.pieces_per_word[w];
  }
  return corpus::encode_bio(corpus::decode_bio(raw), raw.size());
}

std::vector<std::vector<std::string>> predict_corpus(const TaggerModel& model, const Vocabulary& vocab,
                                                     const std::vector<std::vector<std::string>>& sentences,
                                                     std::size_t workers, std::size_t max_len, std::size_t overlap) {
  std::vector<std::vector<std::string>> out(sentences.size());
  parallel_for(sentences.size(), workers, [&](std::size_t i, std::size_t) {
    out[i] = predict_labels(model, vocab, sentences[i], max_len, overlap);
  });
  return out;
}

// ---- early stopping ---------------------------------------------------------

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta) {
  if (patience < 1) throw Error(ErrorCode::InvalidConfig, "patience must be at least 1");
}

bool EarlyStopping::update(double score) {
  ++epoch_;
  if (best_epoch_ == 0 || score > best_ + min_delta_) {
    best_ = score;
    best_epoch_ = epoch_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

// ---- gradient engine -------------------------------------------------------

GradientEngine::GradientEngine(TaggerModel& master, std::size_t workers)
    : master_(master), master_params_(trainable_parameters(master)) {
  workers = std::max<std::size_t>(1, workers);
  replicas_.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) replicas_.push_back(clone_trainable(master));
  for (auto& r : replicas_) replica_params_.push_back(trainable_parameters(r));
}

void GradientEngine::sync() {
  for (auto& params : replica_params_) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto src = master_params_[i]->values();
      std::copy(src.begin(), src.end(), params[i]->mutable_values().begin());
    }
  }
}

std::pair<double, std::size_t> GradientEngine::accumulate(std::span<const std::size_t> examples,
                                                          std::span<const std::uint64_t> seeds,
                                                          const ExampleFn& fn,
                                                          std::vector<std::vector<double>>& grads) {
  if (grads.empty()) {
    for (const auto* p : master_params_) grads.emplace_back(p->numel(), 0.0);
  }
  sync();
  std::vector<std::vector<std::vector<double>>> slots(examples.size());
  std::vector<double> losses(examples.size(), 0.0);
  std::vector<std::size_t> actives(examples.size(), 0);
  parallel_for(examples.size(), replicas_.size(), [&](std::size_t i, std::size_t w) {
    auto& replica = replicas_[w];
    auto& params = replica_params_[w];
    for (auto* p : params) p->zero_grad();
    Rng rng(seeds[i]);
    auto result = fn(replica, examples[i], rng);
    actives[i] = result.active;
    if (result.active == 0) return;
    losses[i] = result.loss_sum.item();
    ad::backward(result.loss_sum);
    auto& slot = slots[i];
    slot.reserve(params.size());
    for (auto* p : params) {
      const auto g = p->grad();
      slot.emplace_back(g.begin(), g.end());
    }
  });
  double loss = 0.0;
  std::size_t active = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    loss += losses[i];
    active += actives[i];
    if (slots[i].empty()) continue;
    for (std::size_t p = 0; p < grads.size(); ++p) {
      auto& dst = grads[p];
      const auto& src = slots[i][p];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  return {loss, active};
}

// ---- perplexity ------------------------------------------------------------

double perplexity(const std::vector<std::vector<PieceId>>& corpus, std::size_t vocab_size,
                  const MlmLogitsFn& logits_fn, std::uint64_t seed, double rate) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "perplexity needs a nonempty corpus");
  Rng rng(seed);
  const auto masked = mask_batch(corpus, rate, vocab_size, rng);
  double nll = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto rows = active_positions(masked.targets[s]);
    if (rows.empty()) continue;
    std::vector<std::int32_t> targets;
    for (auto r : rows) targets.push_back(masked.targets[s][static_cast<std::size_t>(r)]);
    const auto logits = logits_fn(masked.input_ids[s], rows);
    nll += ad::smoothed_cross_entropy(logits, targets, 0.0, ad::Reduction::Sum).item();
    count += rows.size();
  }
  if (count == 0) throw Error(ErrorCode::EmptyCorpus, "masking selected no positions");
  return std::exp(nll / static_cast<double>(count));
}

double perplexity(const encoder::Encoder& model, const std::vector<std::vector<PieceId>>& corpus,
                  std::uint64_t seed, double rate, std::size_t workers) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "perplexity needs a nonempty corpus");
  const std::size_t vocab = model.config().vocab_size;
  Rng rng(seed);
  const auto masked = mask_batch(corpus, rate, vocab, rng);
  encoder::Encoder& shared = const_cast<encoder::Encoder&>(model);
  const auto head = encoder::MlmHead::tied_to(shared);
  std::vector<double> nll(corpus.size(), 0.0);
  std::vector<std::size_t> counts(corpus.size(), 0);
  parallel_for(corpus.size(), workers, [&](std::size_t s, std::size_t) {
    const auto rows = active_positions(masked.targets[s]);
    if (rows.empty()) return;
    std::vector<std::int32_t> targets;
    for (auto r : rows) targets.push_back(masked.targets[s][static_cast<std::size_t>(r)]);
    encoder::ForwardContext ctx;
    const auto logits = masked_logits(model, head, masked.input_ids[s], rows, ctx);
    nll[s] = ad::smoothed_cross_entropy(logits, targets, 0.0, ad::Reduction::Sum).item();
    counts[s] = rows.size();
  });
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    total += nll[s];
    count += counts[s];
  }
  if (count == 0) throw Error(ErrorCode::EmptyCorpus, "masking selected no positions");
  return std::exp(total / static_cast<double>(count));
}

// ---- stage drivers ---------------------------------------------------------

std::string format_epoch(const EpochLog& log, const std::string& metric_name) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch=%zu train_loss=%.6f %s=%.6f lr=%.6e", log.epoch, log.train_loss,
                metric_name.c_str(), log.metric, log.lr);
  return buf;
}

DaptResult train_dapt(const encoder::Encoder& base, const std::vector<std::vector<PieceId>>& train_seqs,
                      const std::vector<std::vector<PieceId>>& heldout_seqs, const lora::LoraConfig& lora_cfg,
                      const TrainPlan& plan, std::size_t workers, const LogSink& log) {
  plan.validate();
  if (train_seqs.empty()) throw Error(ErrorCode::EmptyCorpus, "DAPT training corpus is empty");
  if (heldout_seqs.empty()) throw Error(ErrorCode::EmptyCorpus, "DAPT held-out corpus is empty");
  const Schedule sched = make_schedule(train_seqs.size(), plan);
  const std::uint64_t ppl_seed = derive_seed(plan.seed, {kPerplexityTag});

  DaptResult result;
  result.base_perplexity = perplexity(base, heldout_seqs, ppl_seed, plan.mask_rate, workers);

  TaggerModel model;
  model.encoder = lora::merge(base);  // fresh storage, never aliases the caller's tensors
  Rng inject_rng(derive_seed(plan.seed, {kInjectTag}));
  lora::inject(model.encoder, lora_cfg, inject_rng);

  const std::size_t vocab = base.config().vocab_size;
  GradientEngine engine(model, workers);
  const auto decay = decay_mask(engine.parameters());
  AdamWState opt;
  const ExampleFn fn = [&](TaggerModel& replica, std::size_t ex, Rng& rng) -> ExampleLoss {
    std::vector<PieceId> ids;
    std::vector<std::int32_t> targets;
    std::vector<Corruption> kinds;
    mask_sequence(train_seqs[ex], plan.mask_rate, vocab, rng, ids, targets, kinds);
    const auto rows = active_positions(targets);
    if (rows.empty()) return {};
    std::vector<std::int32_t> row_targets;
    for (auto r : rows) row_targets.push_back(targets[static_cast<std::size_t>(r)]);
    const auto head = encoder::MlmHead::tied_to(replica.encoder);
    encoder::ForwardContext ctx{true, &rng};
    const auto logits = masked_logits(replica.encoder, head, ids, rows, ctx);
    return {ad::smoothed_cross_entropy(logits, row_targets, plan.label_smoothing, ad::Reduction::Sum),
            rows.size()};
  };

  double ppl = result.base_perplexity;
  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    const auto stats = run_epoch(engine, opt, decay, train_seqs.size(), epoch, plan, sched, fn);
    ppl = perplexity(model.encoder, heldout_seqs, ppl_seed, plan.mask_rate, workers);
    EpochLog entry{epoch, stats.active ? stats.loss_sum / static_cast<double>(stats.active) : 0.0, ppl,
                   stats.lr};
    result.history.push_back(entry);
    if (log) log(format_epoch(entry, "perplexity"));
  }
  result.final_perplexity = ppl;
  result.adapter = lora::extract(model.encoder, lora_cfg);
  result.merged = lora::merge(model.encoder);
  return result;
}

FinetuneResult train_finetune(const TaggerModel& initial, const Vocabulary& vocab,
                              const std::vector<corpus::LabeledSequence>& train_set,
                              const std::vector<corpus::LabeledSequence>& dev_set, const TrainPlan& plan,
                              std::size_t workers, const LogSink& log) {
  plan.validate();
  if (dev_set.empty()) throw Error(ErrorCode::EmptyDevSet, "fine-tuning needs a dev set for model selection");
  const auto examples = make_tagging_examples(train_set, vocab, initial.head.labels);
  if (examples.empty()) throw Error(ErrorCode::EmptyCorpus, "fine-tuning training set is empty");
  const Schedule sched = make_schedule(examples.size(), plan);

  TaggerModel model = clone_trainable(initial);
  GradientEngine engine(model, workers);
  const auto decay = decay_mask(engine.parameters());
  AdamWState opt;
  const ExampleFn fn = [&](TaggerModel& replica, std::size_t ex, Rng& rng) -> ExampleLoss {
    const auto& example = examples[ex];
    std::size_t active = 0;
    for (auto t : example.targets) active += t != kIgnore;
    if (active == 0) return {};
    encoder::ForwardContext ctx{true, &rng};
    const auto logits = encoder::classifier_logits(replica.encoder.encode(example.ids, ctx), replica.head);
    return {ad::smoothed_cross_entropy(logits, example.targets, plan.label_smoothing, ad::Reduction::Sum),
            active};
  };

  std::vector<std::vector<std::string>> dev_words, dev_gold;
  for (const auto& s : dev_set) {
    dev_words.push_back(s.words);
    dev_gold.push_back(s.labels);
  }

  FinetuneResult result;
  EarlyStopping stopper(plan.patience, plan.min_delta);
  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    const auto stats = run_epoch(engine, opt, decay, examples.size(), epoch, plan, sched, fn);
    const auto pred = predict_corpus(model, vocab, dev_words, workers);
    const double f1 = eval::score_labels(dev_gold, pred).micro.f1;
    EpochLog entry{epoch, stats.active ? stats.loss_sum / static_cast<double>(stats.active) : 0.0, f1,
                   stats.lr};
    result.history.push_back(entry);
    if (log) log(format_epoch(entry, "dev_f1"));
    if (stopper.update(f1)) {
      result.best = clone_trainable(model);
      result.best_epoch = epoch;
      result.best_dev_f1 = f1;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace peftner::train
